use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("dtype mismatch in {op}: {detail}")]
    DType { op: &'static str, detail: String },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown layer {name:?}; valid layers are {valid:?}")]
    UnknownLayer { name: String, valid: Vec<String> },

    #[error("degenerate distribution for layer {layer:?}: {detail}")]
    Degenerate { layer: String, detail: String },

    #[error("forged {side} band [{lo}, {hi}] on layer {layer:?} contains {colliding} validation observations")]
    BandCollision {
        layer: String,
        side: String,
        lo: f64,
        hi: f64,
        colliding: usize,
    },

    #[error("insufficient data: {required} items required, {available} available")]
    InsufficientData { required: usize, available: usize },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(offset: impl TryInto<u64>, message: impl Into<String>) -> Self {
        Error::Parse {
            offset: offset.try_into().unwrap_or(u64::MAX),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Byte offset carried by parse errors.
    pub fn offset(&self) -> Option<u64> {
        match self {
            Error::Parse { offset, .. } => Some(*offset),
            _ => None,
        }
    }
}
