//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide error enumeration.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent with others.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Two inputs that must agree in shape do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix that must be inverted is numerically singular.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// An iterative solver exhausted its iteration budget.
    #[error("did not converge: {0}")]
    NonConvergence(String),

    /// A statistical estimate was requested from too little data.
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    /// A feasibility condition of an optimization problem is violated.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Underlying I/O failure while reading or writing run outputs.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A config or data file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
