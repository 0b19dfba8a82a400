use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the similarity, loss, assignment and evaluation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("keypoint count mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("ground truth has no visible keypoints")]
    NoVisibleKeypoints,

    #[error("instance scale must be positive, got {0}")]
    DegenerateScale(f64),

    #[error("non-finite input: {0}")]
    NonFinite(f64),

    #[error("no candidates to assign")]
    NoCandidates,

    #[error("{gts} ground truths but only {cands} candidates")]
    InsufficientCandidates { gts: usize, cands: usize },

    #[error("prediction {prediction} selected by more than one ground truth")]
    NonInjectiveSelection { prediction: usize },

    #[error("index {index} out of bounds for length {len}")]
    IndexOutOfBounds { index: usize, len: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

/// Errors raised while reading or writing annotation, result and candidate files.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: parse error at line {line}, column {column}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("{path}: {msg}")]
    Schema { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DataError {
    pub(crate) fn schema(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        DataError::Schema {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn from_json(path: impl Into<PathBuf>, err: serde_json::Error) -> Self {
        use serde_json::error::Category;
        let path = path.into();
        match err.classify() {
            Category::Data => DataError::Schema {
                path,
                msg: format!("{err}"),
            },
            Category::Io => DataError::Io {
                path,
                source: err.into(),
            },
            Category::Syntax | Category::Eof => DataError::Parse {
                path,
                line: err.line(),
                column: err.column(),
                msg: format!("{err}"),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
