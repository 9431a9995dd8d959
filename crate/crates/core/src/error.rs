use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },

    /// Mask refinement left nothing; carries the raw segmenter popcount.
    #[error("refined mask is empty (raw mask had {raw_popcount} pixels)")]
    EmptyMask { raw_popcount: u64 },

    #[error("reference image has no foreground pixels after keying")]
    EmptyReference,

    #[error("{stage} backend unavailable: {cause}")]
    BackendUnavailable { stage: &'static str, cause: String },

    #[error("oracle segmenter has no sidecar alpha for this job")]
    MissingOracle,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("{0}")]
    StageFailed(crate::pipeline::JobFailure),

    #[error("illegal transition: cannot {action} while job is {state}")]
    IllegalTransition { state: String, action: String },

    #[error("job {0} is busy")]
    Busy(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("artifact {0} already exists")]
    ArtifactExists(String),

    #[error("manifest error in {record}: {message}")]
    Manifest { record: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
