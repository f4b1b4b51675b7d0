use thiserror::Error;

/// Errors raised by the estimation, calibration and bound routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected} covariates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A hypothesis required by a bound does not hold; `inequality` names it.
    #[error("hypothesis violated: {inequality} (lhs = {lhs}, rhs = {rhs})")]
    Hypothesis {
        inequality: &'static str,
        lhs: f64,
        rhs: f64,
    },

    #[error("objective became non-finite at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
