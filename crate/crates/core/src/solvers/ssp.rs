use std::collections::VecDeque;
use std::time::Instant;

use super::{improve_choice, PiConfig, SolveReport};
use crate::error::{Error, Result};
use crate::linalg::{solve, CsrMatrix, LinearSolver};
use crate::mdp::Policy;
use crate::pto::PtMdp;

fn expected_rewards(pt: &PtMdp<'_>) -> Vec<f64> {
    let base = pt.base();
    (0..base.num_choices())
        .map(|c| base.choice_transitions(c).iter().map(|t| t.prob * t.reward).sum())
        .collect()
}

/// Every state must reach termination under the chosen choices, otherwise
/// `I − S_π` is singular.
fn check_terminating(pt: &PtMdp<'_>, choices: &[usize]) -> Result<()> {
    let base = pt.base();
    let n = base.num_states();
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut reached = vec![false; n];
    let mut queue = VecDeque::new();
    for (s, &c) in choices.iter().enumerate() {
        let mut stops = 0.0;
        for (k, t) in base.choice_transitions(c).iter().enumerate() {
            let (stay, stop) = pt.split(c, k);
            stops += stop;
            if stay > 0.0 {
                reverse[t.to].push(s);
            }
        }
        if stops > 0.0 {
            reached[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &u in &reverse[v] {
            if !reached[u] {
                reached[u] = true;
                queue.push_back(u);
            }
        }
    }
    match reached.iter().position(|&r| !r) {
        Some(state) => Err(Error::NonTerminating { state }),
        None => Ok(()),
    }
}

/// Expected total reward until absorption from every non-terminal state,
/// for the policy given as global choice indices.
pub fn evaluate_ssp(pt: &PtMdp<'_>, choices: &[usize], solver: LinearSolver, guess: Option<&[f64]>) -> Result<Vec<f64>> {
    let rewards = expected_rewards(pt);
    evaluate_with(pt, choices, &rewards, solver, guess)
}

fn evaluate_with(
    pt: &PtMdp<'_>,
    choices: &[usize],
    rewards: &[f64],
    solver: LinearSolver,
    guess: Option<&[f64]>,
) -> Result<Vec<f64>> {
    check_terminating(pt, choices)?;
    let base = pt.base();
    let n = base.num_states();
    let rows = choices.iter().enumerate().map(|(s, &c)| {
        let mut row = vec![(s, 1.0)];
        for (k, t) in base.choice_transitions(c).iter().enumerate() {
            row.push((t.to, -pt.split(c, k).0));
        }
        row
    });
    let a = CsrMatrix::from_rows(n, rows);
    let b: Vec<f64> = choices.iter().map(|&c| rewards[c]).collect();
    solve(solver, &a, &b, guess)
}

/// Largest violation of the evaluation equations `V = R̂_π + S_π V`.
pub fn ssp_residual(pt: &PtMdp<'_>, policy: &Policy, values: &[f64]) -> Result<f64> {
    policy.check(pt.base())?;
    let base = pt.base();
    let choices = policy.choice_indices(base);
    let mut worst = 0.0f64;
    for (s, &c) in choices.iter().enumerate() {
        let mut rhs = 0.0;
        for (k, t) in base.choice_transitions(c).iter().enumerate() {
            rhs += t.prob * t.reward + pt.split(c, k).0 * values[t.to];
        }
        worst = worst.max((values[s] - rhs).abs());
    }
    Ok(worst)
}

/// Policy iteration for the PT-MDP total-reward objective.
///
/// Starts from `initial` or the lowest admissible action everywhere. When
/// the iteration limit is hit, the last evaluated policy is returned with
/// `converged = false`, so `final_values` always belong to the returned
/// policy.
pub fn ssp_policy_iteration(pt: &PtMdp<'_>, config: &PiConfig, initial: Option<&Policy>) -> Result<(Policy, SolveReport)> {
    let start = Instant::now();
    let base = pt.base();
    let mut choices = match initial {
        Some(p) => {
            p.check(base)?;
            p.choice_indices(base)
        }
        None => (0..base.num_states()).map(|s| base.choices(s).start).collect(),
    };
    let rewards = expected_rewards(pt);
    let mut report = SolveReport::default();
    let mut values: Vec<f64> = Vec::new();
    let mut q = Vec::new();
    for iteration in 1..=config.max_iterations {
        let guess = (!values.is_empty()).then_some(values.as_slice());
        values = evaluate_with(pt, &choices, &rewards, config.linear_solver, guess)?;
        report.linear_solves += 1;
        report.policy_iterations = iteration;

        let mut next = choices.clone();
        let mut changed = 0usize;
        for s in 0..base.num_states() {
            let range = base.choices(s);
            if range.len() == 1 {
                continue;
            }
            q.clear();
            for c in range.clone() {
                let mut v = rewards[c];
                for (k, t) in base.choice_transitions(c).iter().enumerate() {
                    v += pt.split(c, k).0 * values[t.to];
                }
                q.push(v);
            }
            let pick = range.start + improve_choice(&q, choices[s] - range.start, config.stop_threshold);
            if pick != choices[s] {
                next[s] = pick;
                changed += 1;
            }
        }
        log::debug!("ssp iteration {iteration}: {changed} states changed");
        if changed == 0 {
            report.converged = true;
            break;
        }
        if iteration < config.max_iterations {
            choices = next;
        }
    }
    report.objective_value = values[base.s_init()];
    report.final_values = values;
    report.wall_time = start.elapsed().as_secs_f64();
    let policy = Policy::from_choices_unchecked(choices.iter().map(|&c| base.choice_action(c)).collect());
    Ok((policy, report))
}
