//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// File does not match the expected on-disk format (bad magic, bad header).
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// Header and payload disagree (truncation, size mismatch).
    #[error("{path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    /// Recognized format but a feature this reader does not handle.
    #[error("{path}: unsupported {what}")]
    Unsupported { path: PathBuf, what: String },

    /// Header requests an allocation beyond the configured cap.
    #[error("volume of {bytes} bytes exceeds allocation cap of {cap} bytes")]
    TooLarge { bytes: u64, cap: u64 },

    #[error("singular transform: {0}")]
    SingularTransform(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty ROI: {0}")]
    EmptyRoi(String),

    #[error("insufficient overlap: {found} samples, {required} required")]
    InsufficientOverlap { found: usize, required: usize },

    #[error("trajectory not found: {0}")]
    TrajectoryNotFound(String),

    #[error("ground truth: {0}")]
    GroundTruth(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Constructors attaching the offending path to the error.
impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn unsupported(path: impl Into<PathBuf>, what: impl Into<String>) -> Self {
        Error::Unsupported {
            path: path.into(),
            what: what.into(),
        }
    }
}
