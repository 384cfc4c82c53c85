//! Batch front end: read a TOML run configuration, build a preset model,
//! solve it, run the requested certificates and write plain-text artifacts.

pub mod config;
pub mod output;
pub mod run;

use thiserror::Error;

pub use config::RunConfig;
pub use run::{execute, list_presets, RunSummary};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(String),
    /// The solver could not be continued; carries the blow-up bracket when
    /// the slab halving underflowed.
    #[error("{message}")]
    Solver { message: String, bracket: Option<(f64, f64)> },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Invalid(_) | CliError::Io(_) => 2,
            CliError::Solver { .. } => 3,
        }
    }
}
