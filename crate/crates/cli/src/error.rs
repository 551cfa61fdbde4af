use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA_FORMAT: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;
pub const EXIT_IO: i32 = 5;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] bmlp::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot access {path}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        use bmlp::Error as E;
        match self {
            CliError::Config(_) | CliError::Core(E::Config(_)) => EXIT_CONFIG,
            CliError::Core(E::Format { .. } | E::Version { .. }) => EXIT_DATA_FORMAT,
            CliError::Core(E::Shape(_) | E::Validation(_) | E::InvalidInput(_)) => EXIT_VALIDATION,
            CliError::Io { .. } | CliError::Core(E::Io { .. }) => EXIT_IO,
        }
    }
}
