use thiserror::Error;

use crate::model::{DetectionId, PathId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box ({x}, {y}, {w}, {h}): width and height must be positive and finite")]
    InvalidBox { x: f64, y: f64, w: f64, h: f64 },

    #[error("score {0} is not a probability in [0, 1]")]
    ScoreOutOfRange(f64),

    #[error("path {0} has no samples")]
    EmptyPath(PathId),

    #[error("path {path_id}: samples must be contiguous, frame {missing} is missing")]
    NonContiguousPath { path_id: PathId, missing: u32 },

    #[error("path {path_id}: duplicate sample at frame {frame}")]
    DuplicatePathSample { path_id: PathId, frame: u32 },

    #[error("point track has no points")]
    EmptyTrack,

    #[error("instance too large for exhaustive search: {0}")]
    InstanceTooLarge(String),

    #[error("confidence {0} is outside the open interval (0, 1)")]
    ConfidenceOutOfRange(f64),

    #[error("transition {from} -> {to} spans {gap} frames, allowed 1..={window}")]
    GapViolation {
        from: DetectionId,
        to: DetectionId,
        gap: i64,
        window: u32,
    },

    #[error("cluster {0} has no source-to-sink path")]
    NoPath(PathId),

    #[error("empty cluster")]
    EmptyCluster,

    #[error("path {path_id}: two supervised boxes at frame {frame}")]
    DuplicateSupervisedBox { path_id: PathId, frame: u32 },

    #[error("path {path_id}: box at frame {frame} lies outside the path span {first}..={last}")]
    BoxOutsideSpan {
        path_id: PathId,
        frame: u32,
        first: u32,
        last: u32,
    },

    #[error("box annotation references unknown path {0}")]
    UnknownPath(PathId),

    #[error("duplicate {0}")]
    Duplicate(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
