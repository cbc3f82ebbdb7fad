//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by constructors, estimators and solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// Structural mismatch between operands (dimension, depth, shape).
    #[error("structure mismatch: {0}")]
    Structure(String),

    /// Invalid argument value.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A derivative provider of the requested order is not available.
    #[error("missing derivative data: {0}")]
    MissingDerivative(String),

    /// The requested operation is not supported by this object
    /// (e.g. a depth-3 expansion of a driver that only carries two levels).
    #[error("capability: {0}")]
    Capability(String),

    /// A smallness-of-horizon condition fails; shrink the time horizon.
    #[error("horizon too large: {0}")]
    Horizon(String),

    /// A near-identity map was not a contraction on the sampled ball.
    #[error("contraction failure: {0}")]
    Contraction(String),

    /// Level-to-level differences did not settle below tolerance.
    #[error("no convergence: {0}")]
    NonCauchy(String),

    /// A NaN or infinity surfaced during evaluation.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Configuration file or parameter validation failure.
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
