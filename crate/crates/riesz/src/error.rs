use std::path::PathBuf;

use thiserror::Error;

/// Failures of a command, each with a fixed process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// Exit code 3.
    #[error("cannot load data from {path}: {reason}")]
    DataLoad { path: PathBuf, reason: String },
    /// Exit code 4.
    #[error("fit failed: {0}")]
    Fit(riesz_core::Error),
    /// Exit code 5.
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    /// Exit code 1.
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Other(_) => 1,
            CliError::Config(_) => 2,
            CliError::DataLoad { .. } => 3,
            CliError::Fit(_) => 4,
            CliError::Write { .. } => 5,
        }
    }

    /// Maps a library error raised while checking inputs.
    pub fn from_validation(e: riesz_core::Error) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Write { path: path.into(), source }
    }
}

impl From<riesz_core::Error> for CliError {
    fn from(e: riesz_core::Error) -> Self {
        CliError::Fit(e)
    }
}
