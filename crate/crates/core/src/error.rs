use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate news id `{0}` in catalog")]
    DuplicateNewsId(String),

    #[error("impression log is not sorted by time (record {index} at {time} precedes {previous})")]
    UnsortedLog { index: usize, time: i64, previous: i64 },

    #[error("{op}: shape mismatch ({detail})")]
    Shape { op: &'static str, detail: String },

    #[error("index {index} out of range for {what} with {len} rows")]
    OutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("loss node must be scalar, got shape {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("unknown category id {0}")]
    UnknownCategory(usize),

    #[error("candidate-aware attention needs at least one unmasked history item")]
    EmptyHistory,

    #[error("non-finite loss at step {step} (lr {lr}, last op {last_op})")]
    NonFiniteLoss {
        step: usize,
        lr: f64,
        last_op: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
