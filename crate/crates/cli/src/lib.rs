//! Command implementations behind the `lossforge` binary.
//!
//! Everything here is std-side plumbing: flag parsing, config files, run
//! manifests, CSV/JSONL emission. The numerics live in `lossforge-core`.

pub mod commands;
pub mod config;
pub mod emit;
pub mod manifest;
pub mod parallel;

use std::fmt;

/// Errors surfaced to the user, split by exit code.
///
/// `Config` covers everything the user can fix by changing flags or config
/// files and maps to exit code 2. `Runtime` covers IO and mid-run failures
/// and maps to exit code 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Wraps an IO error with the path it happened on; exit code 1.
pub fn io_error(context: &str, path: &std::path::Path, err: std::io::Error) -> CliError {
    CliError::Runtime(format!("{context} {}: {err}", path.display()))
}
