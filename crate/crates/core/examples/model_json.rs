//! Exports a model and its probabilistic-termination counterpart as JSON,
//! reads the model back and solves the copy.

use arrmdp::models::bitcoin::{build_bitcoin_mdp, BitcoinParams, BitcoinState, Fork};
use arrmdp::{build_pt_mdp, solve_pto, ArrMdp, PtoSolveConfig};

fn main() -> arrmdp::Result<()> {
    let model = build_bitcoin_mdp(&BitcoinParams::new(0.35, 0.5, 4)?)?;
    let mut buf = Vec::new();
    model.mdp.write_json(&mut buf)?;
    println!("model JSON: {} bytes", buf.len());

    let copy = ArrMdp::read_json(buf.as_slice())?;
    let s = model.state_id(&BitcoinState::new(2, 1, Fork::Relevant)).expect("reachable");
    println!("state (2, 1, relevant) has id {s} and actions {:?}", copy.actions_of(s));

    let pt = build_pt_mdp(&copy, 1e3)?;
    let doc = pt.to_json()?;
    println!("PT-MDP has {} states, terminal state {}", doc.states, pt.terminal());

    let a = solve_pto(&model.mdp, &PtoSolveConfig::default())?.rev_arr;
    let b = solve_pto(&copy, &PtoSolveConfig::default())?.rev_arr;
    println!("revenue original {a:.9}, round-tripped {b:.9}");
    Ok(())
}
