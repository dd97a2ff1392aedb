//! Experiment runner behind the `ioncool` binary.

pub mod config;
pub mod output;
pub mod run;

pub use config::{Experiment, ExperimentConfig};
pub use output::{emit_results, parse_results, render_results, ColumnKind, Row, Schema, Value};
pub use run::{resolve_out_dir, run_experiment, Overrides, RunReport, DEFAULT_OUT_DIR, OUT_DIR_ENV};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] ioncool::Error),
    #[error("{0} verify check(s) failed")]
    ChecksFailed(usize),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    /// 1 config, 2 numerical, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) | CliError::ChecksFailed(_) | CliError::Internal(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}
