//! Error type shared by every module.

use thiserror::Error;

/// Failures reported by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Matrix or signal shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// An argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A discrete-time system that must be Schur stable is not.
    #[error("unstable system ({context}): spectral radius {spectral_radius}")]
    Unstable {
        context: String,
        spectral_radius: f64,
    },
    /// Two systems live on incompatible time domains.
    #[error("domain mismatch: {0}")]
    Domain(String),
    /// A matrix that has to be inverted is (numerically) singular.
    #[error("singular matrix: {0}")]
    Singular(String),
    /// An iterative method failed to reach its tolerance.
    #[error("no convergence: {0}")]
    NoConvergence(String),
    /// A closed loop without a delay cannot be evaluated.
    #[error("ill-posed loop: {0}")]
    IllPosed(String),
    /// A matrix that must be diagonalizable is defective or near-defective.
    #[error("not diagonalizable: eigenvector condition {condition:e}")]
    NotDiagonalizable { condition: f64 },
    /// Text input could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
