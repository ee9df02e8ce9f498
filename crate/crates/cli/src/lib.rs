//! Command-line front end for the maskref engine.
//!
//! Responsibilities: INI-style experiment configuration, orchestration of the
//! four experiment subcommands (`run`, `sweep`, `timesteps`, `kn`), the
//! `verify` oracle suite, and CSV/SVG emission. All logic lives in this
//! library so tests can drive it directly; `src/main.rs` is a thin argument
//! dispatcher.
//!
//! Exit-code contract: 0 success, 1 usage or configuration error, 2
//! verification failure or an enumeration cap being exceeded.

pub mod config;
pub mod csvio;
pub mod instance;
pub mod plot;
pub mod runner;
pub mod verify;

/// CLI-level failure, tagged with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Invalid usage, flags, or configuration (exit code 1).
    Usage(String),
    /// Verification failed or an instance exceeded an enumeration cap
    /// (exit code 2).
    Verify(String),
}

impl CliError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Verify(_) => 2,
        }
    }

    /// Wraps a core error as a usage error (for config/instance building).
    pub fn usage(err: impl std::fmt::Display) -> Self {
        CliError::Usage(err.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Verify(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Result alias for CLI operations.
pub type CliResult<T> = Result<T, CliError>;
