//! Counts the linear systems solved by PTO and by the binary-search
//! baseline on the same Bitcoin instance.
//!
//! Usage: `cargo run --release --example pto_vs_osm [max_fork] [alpha]`

use arrmdp::models::bitcoin::{build_bitcoin_mdp, BitcoinParams};
use arrmdp::{osm_solve, solve_pto, OsmConfig, PtoSolveConfig};

fn main() -> arrmdp::Result<()> {
    let mut args = std::env::args().skip(1);
    let max_fork: u32 = args.next().map_or(40, |s| s.parse().expect("max_fork"));
    let alpha: f64 = args.next().map_or(0.4, |s| s.parse().expect("alpha"));

    let model = build_bitcoin_mdp(&BitcoinParams::new(alpha, 0.0, max_fork)?)?;
    let pto = solve_pto(&model.mdp, &PtoSolveConfig::default())?;
    let osm = osm_solve(&model.mdp, &OsmConfig::default())?;

    println!("solver  revenue    linear_solves  seconds");
    for (name, rev, report) in [("pto", pto.rev_arr, &pto.report), ("osm", osm.rev_arr, &osm.report)] {
        println!("{name:<7} {rev:<10.6} {:<14} {:.2}", report.linear_solves, report.wall_time);
    }
    println!(
        "ratio {:.1}, |difference| {:.2e}, final rho bracket [{:.6}, {:.6}] after {} probes",
        osm.report.linear_solves as f64 / pto.report.linear_solves as f64,
        (pto.rev_arr - osm.rev_arr).abs(),
        osm.rho_lo,
        osm.rho_hi,
        osm.probes.len()
    );
    Ok(())
}
