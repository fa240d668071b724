//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by any module in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes of two operands do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument violates a precondition.
    #[error("invalid input: {0}")]
    Input(String),

    /// A problem instance is too large for an exhaustive routine.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A file does not match its declared binary format.
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// Two inputs that must agree (e.g. image and label files) do not.
    #[error("inconsistent data: {0}")]
    Consistency(String),

    /// A configuration file could not be parsed or fails validation.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
