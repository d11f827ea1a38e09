//! Solvers for average-reward-ratio MDPs: maximise the long-run ratio of
//! accumulated reward to accumulated difficulty.
//!
//! The main route is [`pto::solve_pto`], which turns the ratio objective
//! into a total-reward problem with probabilistic termination and runs
//! policy iteration on it. [`solvers::osm_solve`] is the binary-search
//! baseline. [`chain`] evaluates any fixed policy exactly and
//! [`models`] generates the Bitcoin and Ethereum selfish-mining models.

pub mod chain;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod mdp;
pub mod models;
pub mod pto;
pub mod solvers;
pub mod threshold;

pub use chain::{arr_revenue, arr_revenue_with, stationary_distribution, RevenueBreakdown, StationaryDistribution};
pub use error::{Error, Result};
pub use linalg::LinearSolver;
pub use mdp::{ActionId, ArrMdp, ArrMdpBuilder, Policy, StateId, Transition};
pub use pto::{build_pt_mdp, solve_pto, PtMdp, PtoOutcome, PtoSolveConfig};
pub use models::ModelSpec;
pub use solvers::{osm_solve, OsmConfig, SolveReport};
pub use threshold::{find_threshold, ThresholdConfig, ThresholdRecord};
