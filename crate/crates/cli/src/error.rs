use std::path::Path;

use thiserror::Error;

/// Failure of a run, mapped to the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Unreadable(String),
    #[error(transparent)]
    Core(#[from] selfdual_core::Error),
}

impl CliError {
    pub fn unreadable(path: &Path, e: std::io::Error) -> Self {
        CliError::Unreadable(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Unreadable(_) | CliError::Core(selfdual_core::Error::Io(_)) => 3,
            _ => 2,
        }
    }
}
