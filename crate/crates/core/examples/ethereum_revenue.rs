//! Optimal strategy in the Ethereum model with uncle and nephew rewards.
//!
//! Usage: `cargo run --release --example ethereum_revenue [max_fork] [alpha] [horizon]`
//!
//! Fork bound 10 takes tens of seconds. Fork 20 has about 280k states and
//! needs a few GB of memory and a long run.

use arrmdp::models::ethereum::{build_ethereum_mdp, EthereumAction, EthereumParams};
use arrmdp::{arr_revenue, solve_pto, PtoSolveConfig};

fn main() -> arrmdp::Result<()> {
    let mut args = std::env::args().skip(1);
    let max_fork: u32 = args.next().map_or(8, |s| s.parse().expect("max_fork"));
    let alpha: f64 = args.next().map_or(0.3, |s| s.parse().expect("alpha"));
    let horizon: f64 = args.next().map_or(1e5, |s| s.parse().expect("horizon"));

    let model = build_ethereum_mdp(&EthereumParams::new(alpha, max_fork)?)?;
    println!("{} states, d_max {}", model.mdp.num_states(), model.mdp.d_max());
    let honest = arr_revenue(&model.mdp, &model.honest_policy())?.rev_arr;
    let out = solve_pto(&model.mdp, &PtoSolveConfig::with_horizon(horizon))?;
    println!("honest {honest:.6}, optimal {:.6} after {} iterations", out.rev_arr, out.report.policy_iterations);

    // how often does the optimal strategy use each action?
    let mut counts = [0usize; EthereumAction::ALL.len()];
    for &a in out.policy.actions() {
        counts[a as usize] += 1;
    }
    for act in EthereumAction::ALL {
        println!("{:<8} chosen in {} states", act.name(), counts[act.id() as usize]);
    }
    Ok(())
}
