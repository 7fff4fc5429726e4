use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {op} got {left:?} and {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("feature column {column} is constant ({value}); cannot min-max scale")]
    DegenerateFeature { column: usize, value: f64 },
    #[error("column {column} has no present values to impute from")]
    Imputation { column: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("{path}:{line}: column `{column}`: {message}")]
    Ingestion {
        path: PathBuf,
        line: usize,
        column: String,
        message: String,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Divergence {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
