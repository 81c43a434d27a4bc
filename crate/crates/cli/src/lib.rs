//! Plumbing around the `asiis` simulations: schedule scripts, the
//! line-delimited JSON trace format, and the `run` / `check` / `fuzz`
//! commands behind the `asiis` binary.

pub mod commands;
pub mod script;
pub mod trace;

use std::path::PathBuf;

use thiserror::Error;

/// Errors that end a command before any checking happens. All of them map to
/// exit status 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// The trace parsed but its records do not fit together.
    #[error("malformed trace: {0}")]
    Malformed(String),
    #[error(transparent)]
    Core(#[from] asiis::Error),
}

impl CliError {
    pub fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        CliError::Parse { path: path.into(), line, message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Exit statuses shared by every subcommand.
pub mod exit {
    pub const PASS: u8 = 0;
    pub const CHECK_FAILED: u8 = 1;
    pub const USAGE: u8 = 2;
}
