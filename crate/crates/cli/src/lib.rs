//! Reproducible experiments over the table compiler, the functional executor
//! and the accelerator models. Everything is driven by an [`ExperimentSpec`]
//! and a single seed; outputs are CSV files sorted by config key.

pub mod commands;
pub mod experiment;

pub use commands::{cmd_compile, cmd_gen, cmd_report, cmd_run, cmd_sim, ReportFiles, SIM_COLUMNS};
pub use experiment::{ExperimentSpec, NetworkSpec, RunConfig, Vectorization};

use ucnn_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{key}: {source}")]
    At { key: String, source: Error },
    #[error(transparent)]
    Core(#[from] Error),
    #[error("oracle mismatch: {0}")]
    Oracle(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn at(key: impl Into<String>, source: Error) -> Self {
        CliError::At { key: key.into(), source }
    }

    /// 1 configuration error, 2 oracle mismatch, 3 capacity violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Oracle(_) => 2,
            CliError::At { source: Error::Capacity(_), .. } | CliError::Core(Error::Capacity(_)) => 3,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}
