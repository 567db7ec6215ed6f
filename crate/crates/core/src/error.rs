use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("dates not strictly increasing at row {row}")]
    NonMonotoneDates { row: usize },

    #[error("empty series after ingestion")]
    Empty,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter dimension mismatch: {variant} expects {expected} beta coefficients, got {got}")]
    Dimension {
        variant: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("singular regressor matrix (condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("expected shortfall must be negative, got {es} at index {index}")]
    NonNegativeEs { index: usize, es: f64 },

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("refit for {date} failed: {source}")]
    Refit {
        date: chrono::NaiveDate,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
