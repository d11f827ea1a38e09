use std::time::Instant;

use super::{improve_choice, PiConfig, SolveReport};
use crate::error::Result;
use crate::linalg::{solve, CsrMatrix, LinearSolver};
use crate::mdp::{ArrMdp, Policy, Transition};

/// Gain and bias of a unichain policy. The bias is pinned to zero at the
/// initial state and that unknown is reused for the gain, so the system is
/// `(I − P) h + g·1 = r` with column `s_init` replaced by ones.
///
/// Returns `(g, h)` with `h[s_init] = 0`.
pub fn evaluate_gain_bias(
    mdp: &ArrMdp,
    choices: &[usize],
    rewards: &[f64],
    solver: LinearSolver,
) -> Result<(f64, Vec<f64>)> {
    let anchor = mdp.s_init();
    let rows = choices.iter().enumerate().map(|(s, &c)| {
        let mut row = vec![(anchor, 1.0)];
        if s != anchor {
            row.push((s, 1.0));
        }
        for t in mdp.choice_transitions(c) {
            if t.to != anchor {
                row.push((t.to, -t.prob));
            }
        }
        row
    });
    let a = CsrMatrix::from_rows(mdp.num_states(), rows);
    let b: Vec<f64> = choices.iter().map(|&c| rewards[c]).collect();
    let mut x = solve(solver, &a, &b, None)?;
    let gain = x[anchor];
    x[anchor] = 0.0;
    Ok((gain, x))
}

/// Average-reward policy iteration for an arbitrary per-transition reward.
///
/// `report.objective_value` is the gain of the returned policy and
/// `report.final_values` is its bias vector.
pub fn avg_reward_policy_iteration(
    mdp: &ArrMdp,
    reward: impl Fn(&Transition) -> f64,
    config: &PiConfig,
    initial: Option<&Policy>,
) -> Result<(Policy, SolveReport)> {
    let start = Instant::now();
    let rewards: Vec<f64> = (0..mdp.num_choices())
        .map(|c| mdp.choice_transitions(c).iter().map(|t| t.prob * reward(t)).sum())
        .collect();
    let mut choices = match initial {
        Some(p) => {
            p.check(mdp)?;
            p.choice_indices(mdp)
        }
        None => (0..mdp.num_states()).map(|s| mdp.choices(s).start).collect(),
    };
    let mut report = SolveReport::default();
    let mut gain = 0.0;
    let mut bias = Vec::new();
    let mut q = Vec::new();
    for iteration in 1..=config.max_iterations {
        (gain, bias) = evaluate_gain_bias(mdp, &choices, &rewards, config.linear_solver)?;
        report.linear_solves += 1;
        report.policy_iterations = iteration;

        let mut next = choices.clone();
        let mut changed = 0;
        for s in 0..mdp.num_states() {
            let range = mdp.choices(s);
            if range.len() == 1 {
                continue;
            }
            q.clear();
            q.extend(range.clone().map(|c| {
                rewards[c] + mdp.choice_transitions(c).iter().map(|t| t.prob * bias[t.to]).sum::<f64>()
            }));
            let pick = range.start + improve_choice(&q, choices[s] - range.start, config.stop_threshold);
            if pick != choices[s] {
                next[s] = pick;
                changed += 1;
            }
        }
        if changed == 0 {
            report.converged = true;
            break;
        }
        if iteration < config.max_iterations {
            choices = next;
        }
    }
    report.objective_value = gain;
    report.final_values = bias;
    report.wall_time = start.elapsed().as_secs_f64();
    let policy = Policy::from_choices_unchecked(choices.iter().map(|&c| mdp.choice_action(c)).collect());
    Ok((policy, report))
}
