use std::path::PathBuf;

use thiserror::Error;

use crate::train::TrainReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("channel index {index} out of range for {channels} channel(s)")]
    ChannelOutOfRange { index: usize, channels: usize },

    #[error("structuring element {m}x{n} does not fit a {width}x{height} map")]
    WindowTooLarge {
        m: usize,
        n: usize,
        width: usize,
        height: usize,
    },

    #[error("backward called without a matching forward pass: {0}")]
    StaleCache(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} values, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("annotation format: {0}")]
    AnnotationFormat(String),

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("empty polyline")]
    EmptyPolyline,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        partial: Box<TrainReport>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
