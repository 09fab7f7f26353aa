use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs are inconsistent (shapes, ranks, missing values).
    #[error("usage error: {0}")]
    Usage(String),

    /// The objective is infinite at the requested parameter.
    #[error("infeasible point: {0}")]
    Infeasible(String),

    /// A matrix that must be inverted is singular or not positive definite.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// A simulated sample left at least one domain empty.
    #[error("degenerate sample: {0}")]
    Degenerate(String),

    /// Malformed text input, with the 1-based line number.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
