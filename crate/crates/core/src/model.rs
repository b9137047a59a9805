//! Domain types and elementary box geometry.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowest and highest score a detection may carry after ingestion, so that
/// `log((1 - s) / s)` stays finite.
pub const SCORE_MIN: f64 = 1e-4;
pub const SCORE_MAX: f64 = 1.0 - 1e-4;

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_newtype!(
    /// Identifier of a detection.
    DetectionId
);
id_newtype!(
    /// Identifier of a path annotation, and of the trajectory inferred from it.
    PathId
);
id_newtype!(
    /// Identifier of an optical-flow point track.
    TrackId
);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Axis-aligned box in pixels: top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let finite = x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite();
        if !finite || w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox { x, y, w, h });
        }
        Ok(Self { x, y, w, h })
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Closed-boundary containment: a point on the edge counts as inside.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x && p.x <= self.x + self.w && p.y >= self.y && p.y <= self.y + self.h
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }
}

/// Intersection over union of two boxes.
pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Linear interpolation in (center, size) space; `t = 0` gives `a`, `t = 1` gives `b`.
pub fn lerp_box(a: &BBox, b: &BBox, t: f64) -> BBox {
    if t <= 0.0 {
        return *a;
    }
    if t >= 1.0 {
        return *b;
    }
    let lerp = |u: f64, v: f64| u + (v - u) * t;
    let (ca, cb) = (a.center(), b.center());
    let w = lerp(a.w, b.w);
    let h = lerp(a.h, b.h);
    let cx = lerp(ca.x, cb.x);
    let cy = lerp(ca.y, cb.y);
    BBox {
        x: cx - w / 2.0,
        y: cy - h / 2.0,
        w,
        h,
    }
}

/// A scored box at one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub id: DetectionId,
    pub frame: u32,
    pub bbox: BBox,
    pub score: f64,
}

impl Detection {
    /// Builds a detection, clamping the score into `[SCORE_MIN, SCORE_MAX]`.
    /// Scores that are not probabilities at all are rejected.
    pub fn new(id: DetectionId, frame: u32, bbox: BBox, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::ScoreOutOfRange(score));
        }
        Ok(Self {
            id,
            frame,
            bbox,
            score: score.clamp(SCORE_MIN, SCORE_MAX),
        })
    }
}

/// Cursor trace for one object: one sample per frame over a contiguous span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathAnnotation {
    pub path_id: PathId,
    first_frame: u32,
    samples: Vec<Point>,
}

impl PathAnnotation {
    pub fn new(path_id: PathId, first_frame: u32, samples: Vec<Point>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyPath(path_id));
        }
        Ok(Self {
            path_id,
            first_frame,
            samples,
        })
    }

    /// Builds a path from unordered `(frame, point)` samples, rejecting gaps
    /// and duplicates.
    pub fn from_samples(path_id: PathId, samples: impl IntoIterator<Item = (u32, Point)>) -> Result<Self> {
        let mut by_frame = BTreeMap::new();
        for (frame, p) in samples {
            if by_frame.insert(frame, p).is_some() {
                return Err(Error::DuplicatePathSample { path_id, frame });
            }
        }
        let first = *by_frame.keys().next().ok_or(Error::EmptyPath(path_id))?;
        for (expected, &frame) in (first..).zip(by_frame.keys()) {
            if frame != expected {
                return Err(Error::NonContiguousPath {
                    path_id,
                    missing: expected,
                });
            }
        }
        Ok(Self {
            path_id,
            first_frame: first,
            samples: by_frame.into_values().collect(),
        })
    }

    pub fn first_frame(&self) -> u32 {
        self.first_frame
    }

    pub fn last_frame(&self) -> u32 {
        self.first_frame + self.samples.len() as u32 - 1
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn contains_frame(&self, frame: u32) -> bool {
        frame >= self.first_frame && frame <= self.last_frame()
    }

    pub fn sample(&self, frame: u32) -> Option<Point> {
        if frame < self.first_frame {
            return None;
        }
        self.samples.get((frame - self.first_frame) as usize).copied()
    }

    pub fn samples(&self) -> impl Iterator<Item = (u32, Point)> + '_ {
        self.samples
            .iter()
            .enumerate()
            .map(move |(i, p)| (self.first_frame + i as u32, *p))
    }
}

/// An optical-flow point trajectory: one position per consecutive frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointTrack {
    pub track_id: TrackId,
    start_frame: u32,
    points: Vec<Point>,
}

impl PointTrack {
    pub fn new(track_id: TrackId, start_frame: u32, points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyTrack);
        }
        Ok(Self {
            track_id,
            start_frame,
            points,
        })
    }

    pub fn start_frame(&self) -> u32 {
        self.start_frame
    }

    pub fn end_frame(&self) -> u32 {
        self.start_frame + self.points.len() as u32 - 1
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn position(&self, frame: u32) -> Option<Point> {
        if frame < self.start_frame {
            return None;
        }
        self.points.get((frame - self.start_frame) as usize).copied()
    }
}

/// An exact box drawn by the annotator for a path at one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxAnnotation {
    pub path_id: PathId,
    pub frame: u32,
    pub bbox: BBox,
}

/// Where a trajectory box came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxSource {
    Detected,
    Interpolated,
    Extrapolated,
    Supervised,
}

impl BoxSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoxSource::Detected => "detected",
            BoxSource::Interpolated => "interpolated",
            BoxSource::Extrapolated => "extrapolated",
            BoxSource::Supervised => "supervised",
        }
    }
}

impl fmt::Display for BoxSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub bbox: BBox,
    pub source: BoxSource,
}

/// Dense per-frame boxes for one path, at most one per frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub path_id: PathId,
    pub entries: BTreeMap<u32, TrajectoryEntry>,
}

impl Trajectory {
    pub fn new(path_id: PathId) -> Self {
        Self {
            path_id,
            entries: BTreeMap::new(),
        }
    }

    pub fn first_frame(&self) -> Option<u32> {
        self.entries.keys().next().copied()
    }

    pub fn last_frame(&self) -> Option<u32> {
        self.entries.keys().next_back().copied()
    }

    pub fn get(&self, frame: u32) -> Option<&BBox> {
        self.entries.get(&frame).map(|e| &e.bbox)
    }

    /// True when the entries cover `first..=last` without holes.
    pub fn is_contiguous(&self) -> bool {
        match (self.first_frame(), self.last_frame()) {
            (Some(first), Some(last)) => (last - first + 1) as usize == self.entries.len(),
            _ => true,
        }
    }

    pub fn count_source(&self, source: BoxSource) -> usize {
        self.entries.values().filter(|e| e.source == source).count()
    }
}

/// Ground-truth boxes of one object, keyed by the path id that targets it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub path_id: PathId,
    pub boxes: BTreeMap<u32, BBox>,
}

impl GroundTruth {
    pub fn first_frame(&self) -> Option<u32> {
        self.boxes.keys().next().copied()
    }

    pub fn last_frame(&self) -> Option<u32> {
        self.boxes.keys().next_back().copied()
    }
}

impl From<&Trajectory> for GroundTruth {
    fn from(t: &Trajectory) -> Self {
        GroundTruth {
            path_id: t.path_id,
            boxes: t.entries.iter().map(|(f, e)| (*f, e.bbox)).collect(),
        }
    }
}
