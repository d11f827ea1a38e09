//! Cross-checks the exact revenue of the optimal Bitcoin strategy against a
//! simulation of the induced chain.

use arrmdp::models::bitcoin::{build_bitcoin_mdp, BitcoinParams};
use arrmdp::solvers::monte_carlo_revenue;
use arrmdp::{solve_pto, PtoSolveConfig};

fn main() -> arrmdp::Result<()> {
    let model = build_bitcoin_mdp(&BitcoinParams::new(0.4, 0.0, 30)?)?;
    let out = solve_pto(&model.mdp, &PtoSolveConfig::default())?;
    for seed in 0..4 {
        let mc = monte_carlo_revenue(&model.mdp, &out.policy, 1_000_000, seed)?;
        let z = (mc.estimate - out.rev_arr) / mc.std_error;
        println!(
            "seed {seed}: simulated {:.6} +- {:.6}, exact {:.6}, z = {z:+.2}",
            mc.estimate, mc.std_error, out.rev_arr
        );
    }
    Ok(())
}
