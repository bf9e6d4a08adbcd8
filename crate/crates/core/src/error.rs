use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the feature store, the model, the losses and the miner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("truncated payload: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("length mismatch: header predicts {expected} bytes, file holds {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index {index} out of range for {len} layers")]
    LayerOutOfRange { index: usize, len: usize },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("batch too small: {size} items, at least {needed} required")]
    BatchTooSmall { size: usize, needed: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("duplicate id {0}")]
    DuplicateId(u64),

    #[error("k={k} must satisfy 1 <= k < {limit}")]
    BadK { k: usize, limit: usize },

    #[error("degenerate margin scale {0} (must be positive)")]
    DegenerateScale(f64),

    #[error("zero rank variance")]
    ZeroVariance,

    #[error("non-finite value during training at step {step}: {what}")]
    NonFinite { step: u64, what: String },

    #[error("parse error in {path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
