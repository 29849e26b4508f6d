//! Batch experiment runner for the irgain simulator: spec files, sweeps,
//! CSV and SVG output, and the verification suite.

pub mod scenarios;
pub mod spec;
pub mod svg;
pub mod sweep;
pub mod verify;

use std::fmt;

/// Failures mapped to process exit codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// A verification check failed after its retry (exit 1).
    Verify(String),
    /// Unreadable or malformed input (exit 2).
    Parse(String),
    /// A well-formed spec describing a plan that cannot run (exit 3).
    Plan(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Plan(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Verify(m) => write!(f, "verification failed: {m}"),
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Plan(m) => write!(f, "infeasible plan: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
