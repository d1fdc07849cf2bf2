use thiserror::Error;

use crate::instance::ModelKind;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("agent {0} has no positive utility entry")]
    DegenerateAgent(usize),

    /// No allocation gives every agent strictly more than its disagreement utility.
    #[error("infeasible instance: {0}")]
    Infeasible(String),

    #[error("{solver} unsupported for kind {kind}")]
    Unsupported { solver: &'static str, kind: ModelKind },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed matrix: {0}")]
    MalformedMatrix(String),

    #[error("LP solver failed: {0}")]
    Lp(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
