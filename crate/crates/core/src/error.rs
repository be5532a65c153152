use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure talking to a remote embedding or chat service.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProviderError {
    /// Connection failure or timeout. Worth retrying.
    #[error("transport failure: {0}")]
    Transport(String),
    /// The service rejected the request with a client error.
    #[error("request rejected with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("server error HTTP {status}: {body}")]
    Server { status: u16, body: String },
    /// The service answered, but the payload breaks the wire contract.
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("provider misconfigured: {0}")]
    Config(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport(_) | ProviderError::Server { .. })
    }

    pub fn http_status(&self) -> Option<u16> {
        match self {
            ProviderError::Rejected { status, .. } | ProviderError::Server { status, .. } => {
                Some(*status)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Provider(#[from] ProviderError),

    #[error("index build failed: {0}")]
    IndexBuild(String),

    #[error("cannot load index {path}: {reason}")]
    IndexLoad { path: PathBuf, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("sweep aborted: {0}")]
    SweepAborted(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
