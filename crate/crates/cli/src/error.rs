use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Input {
        path: PathBuf,
        source: fault_isolation::Error,
    },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Write { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] fault_isolation::Error),
    #[error("{0}")]
    Usage(String),
    #[error("no sample exceeds a control limit, nothing to isolate")]
    NoFaultySamples,
    #[error("{failed} of {runs} solve(s) hit the iteration cap; report written to {}", report.display())]
    NotConverged { failed: usize, runs: usize, report: PathBuf },
}

impl CliError {
    /// 2 bad input, 3 nothing flagged, 4 solver did not converge.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::NoFaultySamples => 3,
            CliError::NotConverged { .. } => 4,
            CliError::Core(fault_isolation::Error::NotConverged { .. }) => 4,
            _ => 2,
        }
    }

    pub fn input(path: impl Into<PathBuf>) -> impl FnOnce(fault_isolation::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Input { path, source }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
