use thiserror::Error;

use crate::data::DataError;
use crate::models::ModelError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty series")]
    Empty,
    #[error("nominal power must be positive (index {0})")]
    ZeroNominal(usize),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("need at least {needed} non-zero pairs, got {got}")]
    TooFewPairs { needed: usize, got: usize },
    #[error("need at least {needed} test days, got {got}")]
    TooFewDays { needed: usize, got: usize },
    #[error("plant `{0}`: forecast and measured samples cover different hours")]
    HourMismatch(String),
    #[error("model `{0}` is not in the report")]
    UnknownModel(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
