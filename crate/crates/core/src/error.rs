use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate vector: norm is zero or not finite")]
    DegenerateVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("slerp endpoints are antipodal; the geodesic is not unique")]
    AmbiguousGeodesic,
    #[error("pitch {0} rad is at or beyond the +/-pi/2 gimbal boundary")]
    GimbalBoundary(f64),
    #[error("manifest conflict: {0}")]
    ManifestConflict(String),
    #[error("bad label on frame {frame_id}: {reason}")]
    BadLabel { frame_id: String, reason: String },
    #[error("malformed input at {location}: {reason}")]
    Parse { location: String, reason: String },
    #[error("cannot split: {0}")]
    CannotSplit(String),
    #[error("degenerate landmarks: {0}")]
    DegenerateLandmarks(String),
    #[error("missing label: {0}")]
    MissingLabel(String),
    #[error("missing features on frame {0}")]
    MissingFeatures(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("non-finite loss in epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(expected: usize, got: usize) -> Self {
        Error::DimensionMismatch { expected, got }
    }
}
