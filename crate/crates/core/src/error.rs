use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = BiknnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BiknnError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}, column \"{column}\": cannot parse {value:?} as a finite number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: label {value:?} is not 0 or 1")]
    InvalidLabel { row: usize, value: String },

    #[error("label column \"{0}\" not found in header")]
    MissingColumn(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("k = {k} out of range (at most {max} neighbors available)")]
    KOutOfRange { k: usize, max: usize },

    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("labels must contain both classes")]
    SingleClass,

    #[error("labels contain no positives")]
    NoPositives,

    #[error("dataset is unlabeled")]
    Unlabeled,

    #[error("model document: {0}")]
    Model(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
