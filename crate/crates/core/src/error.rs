//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Matrix/network/transition dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An operation was called out of order (e.g. backward without a
    /// cached forward pass).
    #[error("invalid call state: {0}")]
    State(String),

    /// A configuration value is outside its valid range.
    #[error("invalid config: {0}")]
    Config(String),

    /// Too few samples for a statistical estimate (batch covariance
    /// needs at least two rows).
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    /// A matrix that must be positive definite is numerically singular.
    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    /// The replay buffer holds fewer transitions than the requested batch.
    #[error("replay buffer underfull: need {need}, have {have}")]
    Underfull { need: usize, have: usize },

    /// Prioritized sampling was attempted with zero total priority mass.
    #[error("empty priority mass")]
    EmptyPriority,

    /// A value is outside the operation's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A non-finite loss or parameter was produced; the run must abort.
    #[error("divergence: {0}")]
    Divergence(String),

    /// File I/O failed; the path is included for diagnostics.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A config file, snapshot, or metrics file could not be decoded.
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
