use thiserror::Error;

use crate::network::Basis;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("basis mismatch: expected {expected} amplitudes, got {found}")]
    BasisMismatch { expected: Basis, found: Basis },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("time {time} is not on the sampling grid")]
    TimeNotOnGrid { time: f64 },

    #[error("enumeration of {steps} steps exceeds the budget of {cap} steps")]
    BudgetExceeded { steps: usize, cap: usize },

    #[error("enumerated probabilities sum to {total} after {steps} steps")]
    Normalization { steps: usize, total: f64 },
}
