//! Error types shared across the library.

use std::path::PathBuf;

/// Unified error type for all library operations.
///
/// Variants are grouped by who is at fault: `Config` means the caller passed
/// an invalid setting (a usage problem), everything else is a data or I/O
/// problem discovered while processing inputs.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration or arguments supplied by the caller.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Filesystem-level failure (open, read, write).
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file's contents could not be parsed. `line` is 1-based.
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Input data violates an operation's preconditions.
    #[error("invalid data: {0}")]
    Data(String),

    /// Numeric values that must be finite were not.
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error reflects caller misuse rather than bad data.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
