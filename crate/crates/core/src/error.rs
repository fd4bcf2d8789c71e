//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A scalar argument is outside its mathematical domain (e.g. sigma <= 0).
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector or matrix shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A covariate is constant under the relevant scale estimator, so a slope
    /// (or a scale-based score) is unidentifiable. Screeners map this to score 0.
    #[error("degenerate covariate: {0}")]
    Degenerate(String),

    /// Input data contain NaN or infinite values.
    #[error("non-finite data: {0}")]
    Data(String),

    /// An argument fails a precondition that is not a domain/shape issue.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A diagnostic routine could not produce a trustworthy value
    /// (non-convergent fit, quadrature failure).
    #[error("diagnostic failure: {0}")]
    Diagnostic(String),

    /// Malformed input table or cell.
    #[error("input error: {0}")]
    Input(String),

    /// Malformed experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
