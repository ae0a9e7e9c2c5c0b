//! Command errors and their process exit codes.

use std::path::PathBuf;

use thiserror::Error;

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status for an invalid configuration or input.
pub const EXIT_INVALID_CONFIG: i32 = 2;
/// Exit status for a failed acceptance check or audit.
pub const EXIT_CHECK_FAILED: i32 = 3;
/// Exit status for an I/O failure (including corrupt or missing artifacts).
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing input artifact {0}")]
    MissingArtifact(PathBuf),
    #[error("corrupt snapshot {path}: {reason}")]
    CorruptSnapshot { path: PathBuf, reason: String },
    #[error("malformed table {path}: {reason}")]
    MalformedTable { path: PathBuf, reason: String },
    #[error("{failed} check(s) failed")]
    ChecksFailed { failed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Invalid(_) => EXIT_INVALID_CONFIG,
            CliError::ChecksFailed { .. } => EXIT_CHECK_FAILED,
            CliError::Io { .. }
            | CliError::MissingArtifact(_)
            | CliError::CorruptSnapshot { .. }
            | CliError::MalformedTable { .. } => EXIT_IO,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Wrap a library error as invalid input.
    pub fn invalid(e: impl std::fmt::Display) -> Self {
        CliError::Invalid(e.to_string())
    }
}
