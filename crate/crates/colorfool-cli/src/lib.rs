//! Library backing the `colorfool` binary: manifest ingestion, run
//! configuration and the four subcommands.

pub mod commands;
pub mod config;
pub mod manifest;

use std::fmt;

/// Command failures carry the process exit code: usage errors exit 1, I/O
/// errors 2, oracle and protocol errors 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Oracle(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Oracle(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Oracle(m) => write!(f, "oracle error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<colorfool::OracleError> for CliError {
    fn from(e: colorfool::OracleError) -> Self {
        match e {
            colorfool::OracleError::MalformedWeights { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Oracle(e.to_string()),
        }
    }
}

impl From<colorfool::AttackError> for CliError {
    fn from(e: colorfool::AttackError) -> Self {
        match e {
            colorfool::AttackError::Oracle { .. } => CliError::Oracle(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<colorfool::EvalError> for CliError {
    fn from(e: colorfool::EvalError) -> Self {
        match e {
            colorfool::EvalError::Oracle(inner) => CliError::Oracle(inner.to_string()),
            colorfool::EvalError::Attack(colorfool::AttackError::Oracle { .. }) => {
                CliError::Oracle(e.to_string())
            }
            colorfool::EvalError::ThresholdOracleMismatch { .. }
            | colorfool::EvalError::TooFewCalibrationImages { .. }
            | colorfool::EvalError::EmptyInput(_)
            | colorfool::EvalError::LengthMismatch { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<colorfool::RegionError> for CliError {
    fn from(e: colorfool::RegionError) -> Self {
        match e {
            colorfool::RegionError::Io { .. } | colorfool::RegionError::Decode { .. } => {
                CliError::Io(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}
