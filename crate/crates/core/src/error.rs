use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed dataset or checkpoint bytes (bad magic, truncation, bad counts).
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}: unsupported version {found}")]
    Version { path: PathBuf, found: u32 },

    /// Well-formed file whose contents break a model invariant.
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }
}
