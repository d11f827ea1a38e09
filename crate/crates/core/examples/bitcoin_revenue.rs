//! Optimal selfish-mining revenue in Bitcoin with PTO.
//!
//! Usage: `cargo run --release --example bitcoin_revenue [max_fork] [gamma]`
//!
//! The default fork bound of 30 keeps the run short. Pass 95 to get the
//! full-size instance.

use arrmdp::models::bitcoin::{build_bitcoin_mdp, BitcoinParams};
use arrmdp::{solve_pto, PtoSolveConfig};

fn main() -> arrmdp::Result<()> {
    let mut args = std::env::args().skip(1);
    let max_fork: u32 = args.next().map_or(30, |s| s.parse().expect("max_fork"));
    let gamma: f64 = args.next().map_or(0.0, |s| s.parse().expect("gamma"));

    println!("alpha     rev_arr    rev_pt     iterations  states");
    for alpha in [1.0 / 3.0, 0.35, 0.375, 0.4, 0.425, 0.45, 0.475] {
        let model = build_bitcoin_mdp(&BitcoinParams::new(alpha, gamma, max_fork)?)?;
        let out = solve_pto(&model.mdp, &PtoSolveConfig::default())?;
        println!(
            "{alpha:<9.4} {:<10.6} {:<10.6} {:<11} {}",
            out.rev_arr,
            out.rev_pt,
            out.report.policy_iterations,
            model.mdp.num_states()
        );
    }
    Ok(())
}
