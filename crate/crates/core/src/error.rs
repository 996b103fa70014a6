//! Error type shared by every module.

use thiserror::Error;

use crate::model::Source;

pub type Result<T, E = CullError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CullError {
    #[error("invalid bounding box ({x}, {y}, {w}, {h}): width and height must be positive and coordinates finite")]
    InvalidBox { x: f64, y: f64, w: f64, h: f64 },

    #[error("invalid detection score {0}: must lie in [0, 1]")]
    InvalidScore(f64),

    #[error("frame id must not be empty")]
    EmptyFrameId,

    #[error("invalid scale {0}: must lie in (0, 1]")]
    InvalidScale(f64),

    #[error("value {0} outside the scorer domain [0, 1]")]
    DomainError(f64),

    #[error("duplicate frame id `{0}`")]
    DuplicateFrameId(String),

    #[error("class set is empty")]
    EmptyClassSet,

    #[error("frame id mismatch: student `{student}` vs teacher `{teacher}`")]
    FrameIdMismatch { student: String, teacher: String },

    #[error("teacher produced no detections record for surviving frame `{0}`")]
    MissingTeacherFrame(String),

    #[error("no {origin} record for frame `{frame_id}` at scale {scale}")]
    MissingFrame {
        frame_id: String,
        origin: Source,
        scale: f64,
    },

    #[error("frame `{frame_id}` came from the {found}, expected the {expected}")]
    WrongSource {
        frame_id: String,
        expected: Source,
        found: Source,
    },

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("input stream is empty")]
    EmptyStream,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("adapter failed on frame `{frame_id}` at scale {scale}: {reason}")]
    Adapter {
        frame_id: String,
        scale: f64,
        reason: String,
    },

    #[error("requested {requested} frames but only {available} exist")]
    TooFewFrames { requested: usize, available: usize },

    #[error("division by zero: culled total cost is zero")]
    DivisionByZero,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("unknown image id {0}")]
    UnknownImageId(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CullError {
    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            CullError::InvalidConfig(_) => 1,
            CullError::Invariant(_) => 3,
            _ => 2,
        }
    }
}
