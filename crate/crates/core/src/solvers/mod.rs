//! Exact dynamic-programming solvers. Every solver counts the policy
//! evaluation systems it solves, one per evaluation regardless of backend.

mod average;
mod montecarlo;
mod osm;
mod ssp;

pub use average::{avg_reward_policy_iteration, evaluate_gain_bias};
pub use montecarlo::{monte_carlo_revenue, McEstimate};
pub use osm::{osm_solve, OsmConfig, OsmOutcome, OsmProbe};
pub use ssp::{evaluate_ssp, ssp_policy_iteration, ssp_residual};

use serde::{Deserialize, Serialize};

use crate::linalg::LinearSolver;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    #[serde(rename = "iterations")]
    pub policy_iterations: usize,
    pub linear_solves: usize,
    #[serde(rename = "wall_time_s")]
    pub wall_time: f64,
    /// Value vector of the last evaluation (SSP values, or gain followed by
    /// bias for the average-reward solver).
    #[serde(skip)]
    pub final_values: Vec<f64>,
    #[serde(rename = "objective")]
    pub objective_value: f64,
    pub converged: bool,
}

/// Shared policy-iteration settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiConfig {
    pub stop_threshold: f64,
    pub max_iterations: usize,
    pub linear_solver: LinearSolver,
}

impl Default for PiConfig {
    fn default() -> Self {
        Self {
            stop_threshold: 1e-5,
            max_iterations: 200,
            linear_solver: LinearSolver::Direct,
        }
    }
}

/// Greedy choice with incumbent-preserving ties: any action within
/// `threshold` of the best keeps the incumbent; otherwise the lowest action
/// among the near-best wins. `q` is indexed like the state's choices.
pub(crate) fn improve_choice(q: &[f64], incumbent: usize, threshold: f64) -> usize {
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if q[incumbent] >= best - threshold {
        return incumbent;
    }
    q.iter()
        .position(|&v| v >= best - threshold)
        .expect("the maximum is within threshold of itself")
}
