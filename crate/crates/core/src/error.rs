use thiserror::Error;

use crate::mdp::{ActionId, StateId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error("invalid policy: action {action} is not admissible in state {state}")]
    InvalidPolicy { state: StateId, action: ActionId },

    #[error("policy length {got} does not match the number of states {expected}")]
    PolicyLength { expected: usize, got: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("horizon {horizon} must exceed the maximal difficulty contribution {d_max}")]
    HorizonTooSmall { horizon: f64, d_max: f64 },

    #[error("state {state} never reaches the terminal state under the evaluated policy")]
    NonTerminating { state: StateId },

    #[error("average difficulty contribution {0} is not bounded away from zero")]
    ZeroDifficulty(f64),

    #[error("linear solver failed: {0}")]
    SolverFailure(String),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("policy induces more than one recurrent class reachable from the initial state")]
    NotUnichain,

    #[error("binary search bracket is invalid: {0}")]
    BracketFailure(String),

    #[error("threshold bracket is invalid: {0}")]
    BracketInvalid(String),

    #[error("profitability is not monotone in alpha: {0}")]
    NonMonotone(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
