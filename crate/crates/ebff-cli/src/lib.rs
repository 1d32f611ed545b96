//! Library side of the `ebff` binary: configuration, the check registry and
//! the form-factor and kernel evaluators.

pub mod checks;
pub mod cli;
pub mod config;
pub mod eval;
pub mod output;

use thiserror::Error;

pub use checks::{run_check, run_checks, Report, CHECKS};
pub use config::{Format, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("unknown check {name:?} (pick one of: {list} or all)", name = .0, list = CHECKS.join(", "))]
    UnknownCheck(String),
    #[error("config: {0}")]
    Config(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Eval(#[from] ebff::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for usage and configuration problems, 3 for failed preconditions.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::UnknownCheck(_) | CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Precondition(_) | CliError::Eval(_) => 3,
        }
    }
}
