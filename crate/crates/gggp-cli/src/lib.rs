//! Command implementations behind the `gggp` binary: experiment specs,
//! run orchestration, stored-model evaluation, batch summaries and
//! convergence export.

pub mod commands;
pub mod spec;

use thiserror::Error;

/// Exit codes: 0 success, 1 usage/spec error, 2 runtime error.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Spec(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Spec(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn spec(msg: impl Into<String>) -> CliError {
        CliError::Spec(msg.into())
    }
}
