//! Simulates the probabilistic-termination chain and checks that the total
//! difficulty collected before termination is close to the horizon `H`.

use arrmdp::models::bitcoin::{build_bitcoin_mdp, BitcoinParams};
use arrmdp::pto::simulate_total_difficulty;
use arrmdp::{build_pt_mdp, solve_pto, PtoSolveConfig};

fn main() -> arrmdp::Result<()> {
    let model = build_bitcoin_mdp(&BitcoinParams::new(0.35, 0.5, 10)?)?;
    let optimal = solve_pto(&model.mdp, &PtoSolveConfig::with_horizon(1e4))?.policy;
    let policies = [("honest", model.honest_policy()), ("selfish", optimal)];
    let d_max = model.mdp.d_max();
    for horizon in [100.0, 1000.0] {
        let pt = build_pt_mdp(&model.mdp, horizon)?;
        for (name, policy) in &policies {
            let (mean, se) = simulate_total_difficulty(&pt, policy, 100_000, 42)?;
            println!(
                "H={horizon:<6} {name:<8} mean total difficulty {mean:9.3} +- {se:.3}, bound [{}, {}]",
                horizon - d_max - 1.0,
                horizon + d_max
            );
        }
    }
    Ok(())
}
