//! Building an ARR-MDP by hand, then solving and inspecting it.
//!
//! Two states. In state 0 the agent can take a quick job (reward 1, cost 1)
//! or start a long one that moves to state 1. State 1 pays 3 for a cost of
//! 2 and returns to state 0 half of the time.

use arrmdp::mdp::{induce_chain, validate};
use arrmdp::{arr_revenue, osm_solve, solve_pto, stationary_distribution};
use arrmdp::{ArrMdpBuilder, LinearSolver, OsmConfig, Policy, PtoSolveConfig, Transition};

fn main() -> arrmdp::Result<()> {
    let mut b = ArrMdpBuilder::new(2, 0);
    b.add_choice(0, 0, [Transition::new(0, 1.0, 1.0, 1.0)])?;
    b.add_choice(0, 1, [Transition::new(1, 1.0, 0.0, 1.0)])?;
    b.add_choice(1, 0, [Transition::new(0, 0.5, 3.0, 2.0), Transition::new(1, 0.5, 3.0, 2.0)])?;
    let mdp = b.build()?;

    let always_quick = Policy::first_admissible(&mdp);
    let report = validate(&mdp, &[("quick", &always_quick)], 1e-6);
    println!("validation clean: {}", report.is_clean());

    let long = Policy::new(&mdp, vec![1, 0])?;
    let chain = induce_chain(&mdp, &long)?;
    let mu = stationary_distribution(&chain, LinearSolver::Direct)?;
    println!("stationary distribution under the long job: {:?}", mu.mu);

    for (name, p) in [("quick", &always_quick), ("long", &long)] {
        println!("{name:<5} revenue {:.6}", arr_revenue(&mdp, p)?.rev_arr);
    }

    let pto = solve_pto(&mdp, &PtoSolveConfig::with_horizon(1e4))?;
    let osm = osm_solve(&mdp, &OsmConfig::default())?;
    println!("pto picks {:?} with revenue {:.6}", pto.policy.actions(), pto.rev_arr);
    println!("osm picks {:?} with revenue {:.6}", osm.policy.actions(), osm.rev_arr);
    Ok(())
}
