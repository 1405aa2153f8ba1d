use std::io;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("span [{start}, {end}) is out of range for sentence of length {len}")]
    SpanOutOfRange { start: usize, end: usize, len: usize },

    #[error("spans [{}, {}) and [{}, {}) overlap", .first.0, .first.1, .second.0, .second.1)]
    OverlappingSpans {
        first: (usize, usize),
        second: (usize, usize),
    },

    #[error("spans [{}, {}) and [{}, {}) do not overlap", .first.0, .first.1, .second.0, .second.1)]
    DisjointSpans {
        first: (usize, usize),
        second: (usize, usize),
    },

    #[error("length mismatch: {what} has {got}, expected {expected}")]
    Length {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("mentions from different threads: {0} and {1}")]
    CrossThread(String, String),

    #[error("agreement undefined: both groups annotated zero mentions")]
    EmptyAgreement,

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("brute-force enumeration of {0} sequences exceeds the limit of 1e6")]
    InstanceTooLarge(u128),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Whether the error stems from bad input rather than a defect or numerical failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Shape { .. } | Error::NonScalarLoss(_) | Error::NonFinite(_) | Error::InstanceTooLarge(_)
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            line,
            message: message.into(),
        }
    }
}
