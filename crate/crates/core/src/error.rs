use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Variants map onto the failure classes callers need to tell apart:
/// malformed input files, invariant violations, parameter misuse, numeric
/// failures and plain I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error(
        "registry error: backbone `{backbone_id}` expects feature_dim {expected}, found {found}"
    )]
    Registry {
        backbone_id: String,
        expected: usize,
        found: usize,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("dimension error: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("path traversal in manifest entry `{id}`: {path}")]
    Traversal { id: String, path: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("non-finite gradient at index {index}: {value}")]
    Numeric { index: usize, value: f64 },

    #[error("degenerate training set: {0}")]
    Degenerate(String),

    #[error("compatibility error: {0}")]
    Compatibility(String),

    #[error("undefined cosine similarity: zero-norm vector")]
    UndefinedSimilarity,

    #[error("image codec error: {0}")]
    Codec(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the environment (files, disks) rather than of
    /// the data being processed.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::File { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
