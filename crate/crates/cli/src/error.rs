use std::path::Path;

use thiserror::Error;

/// Failures of a command, each with its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or malformed input data (exit 2).
    #[error("{0}")]
    Input(String),
    /// Anything else that went wrong (exit 4).
    #[error("{0}")]
    Internal(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 4,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        CliError::Internal(msg.into())
    }
}

impl From<sphalign::Error> for CliError {
    fn from(e: sphalign::Error) -> Self {
        match e {
            sphalign::Error::Domain(_) | sphalign::Error::Dimension(_) => CliError::Input(e.to_string()),
            sphalign::Error::NonFinite(_) => CliError::Internal(e.to_string()),
        }
    }
}

pub(crate) fn read_failed(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

pub(crate) fn write_failed(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Internal(format!("cannot write {}: {e}", path.display()))
}
