//! Turn weak path annotations into dense bounding-box trajectories.
//!
//! An annotator follows each object with the cursor while the video plays,
//! producing a *path*: one `(x, y)` sample per frame that roughly lies inside
//! the object. Combined with detector output and optical-flow point tracks,
//! the engine infers one box per frame for every path in two stages:
//!
//! 1. [`prelabel`] assigns each detection to a path by minimizing a global
//!    Potts energy with graph cuts ([`maxflow`]).
//! 2. [`linkage`] picks the cheapest time-ordered detection chain in every
//!    cluster with a DAG shortest path, and [`trajectory`] interpolates it
//!    into a dense trajectory, optionally tightened with box supervision.
//!
//! [`synth`] generates seeded synthetic scenarios, [`eval`] measures recall
//! against ground truth and models annotation time, and [`io`] reads and
//! writes the JSON Lines record formats shared by the CLI and the server.

pub mod affinity;
pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod linkage;
pub mod maxflow;
pub mod model;
pub mod pipeline;
pub mod prelabel;
pub mod synth;
pub mod testkit;
pub mod trajectory;

pub use affinity::AffinityGraph;
pub use config::{EngineConfig, ProjectConfig};
pub use error::{Error, Result};
pub use model::{
    box_iou, lerp_box, BBox, BoxAnnotation, BoxSource, Detection, DetectionId, GroundTruth, PathAnnotation, PathId,
    Point, PointTrack, TrackId, Trajectory, TrajectoryEntry,
};
pub use pipeline::{Engine, PipelineOutput, RunReport};
