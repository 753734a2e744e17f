//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "quadrature did not converge: achieved error estimate {achieved:.3e} \
         exceeds requested {requested:.3e} after {subdivisions} subdivisions"
    )]
    QuadratureNonConvergence {
        achieved: f64,
        requested: f64,
        subdivisions: usize,
    },

    #[error("matrix is numerically singular (condition estimate {condition:.3e})")]
    SingularMatrix { condition: f64 },

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
