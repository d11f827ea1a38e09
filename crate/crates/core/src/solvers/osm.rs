//! Binary search on the revenue `ρ`: the optimal gain of `R − ρ·D` is
//! positive exactly when some policy beats `ρ`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{avg_reward_policy_iteration, PiConfig, SolveReport};
use crate::chain::{arr_revenue_with, RevenueBreakdown};
use crate::error::{Error, Result};
use crate::linalg::LinearSolver;
use crate::mdp::{ArrMdp, Policy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OsmConfig {
    /// Bracket width at which the search stops.
    pub epsilon: f64,
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub stop_threshold: f64,
    pub max_pi_iterations: usize,
    pub max_outer_iterations: usize,
    pub linear_solver: LinearSolver,
    /// Seed each inner solve with the previous probe's policy.
    pub warm_start: bool,
}

impl Default for OsmConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            rho_lo: 0.0,
            rho_hi: 1.0,
            stop_threshold: 1e-5,
            max_pi_iterations: 200,
            max_outer_iterations: 64,
            linear_solver: LinearSolver::Direct,
            warm_start: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OsmProbe {
    pub rho: f64,
    pub gain: f64,
    pub iterations: usize,
    pub linear_solves: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OsmOutcome {
    #[serde(skip)]
    pub policy: Policy,
    pub rev_arr: f64,
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub probes: Vec<OsmProbe>,
    pub report: SolveReport,
    pub revenue: RevenueBreakdown,
}

pub fn osm_solve(mdp: &ArrMdp, config: &OsmConfig) -> Result<OsmOutcome> {
    if !(config.epsilon > 0.0) || !(config.rho_lo < config.rho_hi) {
        return Err(Error::InvalidParams(format!(
            "need epsilon > 0 and rho_lo < rho_hi, got {} and [{}, {}]",
            config.epsilon, config.rho_lo, config.rho_hi
        )));
    }
    let start = Instant::now();
    let pi = PiConfig {
        stop_threshold: config.stop_threshold,
        max_iterations: config.max_pi_iterations,
        linear_solver: config.linear_solver,
    };
    let mut report = SolveReport {
        converged: true,
        ..SolveReport::default()
    };
    let mut probes = Vec::new();
    let mut probe = |rho: f64, warm: Option<&Policy>, report: &mut SolveReport| -> Result<(Policy, f64)> {
        let (policy, r) = avg_reward_policy_iteration(mdp, |t| t.reward - rho * t.difficulty, &pi, warm)?;
        report.policy_iterations += r.policy_iterations;
        report.linear_solves += r.linear_solves;
        report.converged &= r.converged;
        probes.push(OsmProbe {
            rho,
            gain: r.objective_value,
            iterations: r.policy_iterations,
            linear_solves: r.linear_solves,
        });
        log::debug!("osm probe rho={rho:.8} gain={:.3e}", r.objective_value);
        Ok((policy, r.objective_value))
    };

    let (mut lo, mut hi) = (config.rho_lo, config.rho_hi);
    let (mut best, gain_lo) = probe(lo, None, &mut report)?;
    if gain_lo < -1e-12 {
        return Err(Error::BracketFailure(format!(
            "optimal gain at the lower end rho={lo} is negative ({gain_lo:.3e})"
        )));
    }
    let mut last = best.clone();
    let mut outer = 0;
    while hi - lo > config.epsilon && outer < config.max_outer_iterations {
        outer += 1;
        let rho = 0.5 * (lo + hi);
        let warm = config.warm_start.then_some(&last);
        let (policy, gain) = probe(rho, warm, &mut report)?;
        if gain > 0.0 {
            lo = rho;
            best = policy.clone();
        } else {
            hi = rho;
        }
        last = policy;
    }
    report.converged &= hi - lo <= config.epsilon;
    let revenue = arr_revenue_with(mdp, &best, config.linear_solver)?.without_mu();
    report.objective_value = revenue.rev_arr;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(OsmOutcome {
        policy: best,
        rev_arr: revenue.rev_arr,
        rho_lo: lo,
        rho_hi: hi,
        probes,
        report,
        revenue,
    })
}
