use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible action: {0}")]
    InfeasibleAction(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: String },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("sample has no valid cells")]
    DegenerateSample,

    #[error("target region is empty")]
    DegenerateTarget,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("planning failed: {0}")]
    PlanningFailure(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("storage error: {0}")]
    Storage(#[from] io::Error),
}

impl Error {
    pub(crate) fn dims(expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::Dimension {
            expected: format!("{}x{}", expected.0, expected.1),
            found: format!("{}x{}", found.0, found.1),
        }
    }
}
