//! Config-driven experiment runner for `batchlab-core`.
//!
//! Every subcommand reads an [`ExperimentConfig`], writes CSV files and a
//! plain-text summary into `<root>/<prefix>/`, and finishes with a
//! `<command>_manifest.txt` listing each artifact's SHA-256.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

pub use config::{ConfigError, Epochs, ExperimentConfig, ProblemKind};
pub use output::{fmt_f64, resolve_root, OutputDir, OUT_ENV};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const RUNTIME: i32 = 1;
    /// Bad config or arguments, or a schedule with hard diagnostics.
    pub const INVALID: i32 = 2;
    pub const DIVERGED: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] batchlab_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => exit::INVALID,
            CliError::Core(batchlab_core::Error::StepTooLarge { .. }) => exit::INVALID,
            CliError::Io(_) | CliError::Core(_) => exit::RUNTIME,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}
