use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the bridge pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("row {row} has {found} columns, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value at line {line}")]
    NonFiniteInput { line: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("time {0} is outside the admissible range (t must satisfy 0 <= t < 1)")]
    SingularTime(f64),

    #[error("non-finite value during sinkhorn iteration {iteration}")]
    SinkhornNonFinite { iteration: usize },

    #[error("non-finite state in trajectory {trajectory} at step {step}")]
    NonFiniteState { trajectory: usize, step: usize },

    #[error("transport plan is numerically degenerate (total mass {0})")]
    DegeneratePlan(f64),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("index ({row}, {col}) out of range for a {rows}x{cols} plan")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
