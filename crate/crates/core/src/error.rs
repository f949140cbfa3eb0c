use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A point is on the boundary of, or outside, the set it must lie in.
    #[error("point violates domain: gauge {gauge} exceeds limit {limit}")]
    DomainViolation { gauge: f64, limit: f64 },

    /// Invalid parameters (dimension, delta, horizon, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Matrix was not symmetric positive definite.
    #[error("factorization failed: smallest eigenvalue {min_eigenvalue:e}")]
    Factorization { min_eigenvalue: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    /// The propose -> loss -> update sequence was violated.
    #[error("protocol error: {0}")]
    Protocol(&'static str),

    /// An internal guarantee did not hold; indicates a numerical bug.
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
