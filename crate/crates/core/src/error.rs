use thiserror::Error;

use crate::structure::StructureError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column {index} is constant (variance below 1e-12)")]
    ConstantColumn { index: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at row {row}, column {column}")]
    NonFiniteInput { row: usize, column: usize },

    #[error("empty data: {0}")]
    Empty(String),

    #[error("invalid variable names: {0}")]
    InvalidNames(String),

    #[error("covariance matrix is degenerate: {0}")]
    DegenerateCovariance(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid structure: {}", join_errors(.0))]
    InvalidStructure(Vec<StructureError>),

    #[error("solver iterates became non-finite at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("reference solver did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_errors(errs: &[StructureError]) -> String {
    errs.iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
