use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("no removal target: segmentation mask is empty")]
    EmptyTarget,

    #[error("segmentation mask covers the whole image")]
    FullTarget,

    #[error("keep mask has no visible pixels; nothing to inpaint from")]
    NoContext,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no pixel was masked by any sample")]
    NoCoverage,

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Codec {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("external command `{command}` failed: {reason}\n--- stderr ---\n{stderr}")]
    External {
        command: String,
        reason: String,
        stderr: String,
    },

    #[error("external command `{command}` timed out after {seconds} s")]
    Timeout { command: String, seconds: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of a pluggable oracle (inpainter, detector, metric)
    /// rather than of the caller's inputs.
    pub fn is_oracle_failure(&self) -> bool {
        matches!(self, Error::External { .. } | Error::Timeout { .. })
    }
}
