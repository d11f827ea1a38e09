//! Bisection for the smallest profitable mining power.
//!
//! Usage: `cargo run --release --example security_threshold [gamma] [max_fork]`

use arrmdp::models::{bitcoin::BitcoinParams, ModelSpec};
use arrmdp::{find_threshold, PtoSolveConfig, ThresholdConfig};

fn main() -> arrmdp::Result<()> {
    let mut args = std::env::args().skip(1);
    let gamma: f64 = args.next().map_or(0.5, |s| s.parse().expect("gamma"));
    let max_fork: u32 = args.next().map_or(20, |s| s.parse().expect("max_fork"));

    let spec = ModelSpec::Bitcoin(BitcoinParams::new(0.1, gamma, max_fork)?);
    let config = ThresholdConfig {
        lo: 0.0,
        hi: 0.45,
        tol: 1e-3,
        solve: PtoSolveConfig::with_horizon(1e5),
        ..ThresholdConfig::default()
    };
    let record = find_threshold(&spec, &config)?;
    for p in &record.bracket_history {
        println!(
            "alpha={:.6} rev={:.6} profitable={:<5} bracket=[{:.6}, {:.6}]",
            p.alpha, p.rev_arr, p.profitable, p.lo, p.hi
        );
    }
    println!("threshold ~ {:.4}", record.threshold);
    Ok(())
}
