use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CcError {
    /// The request never produced a usable response, retries included.
    #[error("transport error for {url} after {attempts} attempt(s): {message}")]
    Transport {
        url: String,
        attempts: u32,
        message: String,
    },

    #[error("HTTP {status} from {url}")]
    Http { url: String, status: u16 },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("cache {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CcError {
    /// Network and storage failures, as opposed to bad input or bad data.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            CcError::Transport { .. } | CcError::Http { .. } | CcError::Cache { .. }
        )
    }
}

pub type Result<T, E = CcError> = std::result::Result<T, E>;
