use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("fields live on different domains")]
    DomainMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "quadrature underresolved: estimated error {estimate:e} exceeds tolerance {tolerance:e}"
    )]
    Quadrature { estimate: f64, tolerance: f64 },

    #[error("series truncation: tail bound {tail:e} exceeds tolerance {tolerance:e}")]
    Truncation { tail: f64, tolerance: f64 },

    #[error("cannot project onto the Nehari manifold: positive part of u vanishes")]
    VanishingPositivePart,

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
