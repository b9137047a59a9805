//! Pairwise detection affinities from optical-flow point tracks.
//!
//! Two detections in different frames are affine when many point tracks pass
//! through both boxes. The affinity is the IoU of the two track-id sets.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::model::{box_iou, Detection, DetectionId, Point, PointTrack, TrackId};

/// Sparse affinities between detections less than one window apart.
///
/// Edges are keyed `(earlier, later)` by frame; a pair is stored once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffinityGraph {
    edges: BTreeMap<(DetectionId, DetectionId), f64>,
    window_frames: u32,
}

impl AffinityGraph {
    pub fn empty(window_frames: u32) -> Self {
        Self {
            edges: BTreeMap::new(),
            window_frames,
        }
    }

    /// Builds a graph from explicit edges. Every endpoint must appear in
    /// `detections`; pairs must lie in distinct frames within the window and
    /// carry an affinity in `(0, 1]`.
    pub fn from_edges(
        detections: &[Detection],
        window_frames: u32,
        edges: impl IntoIterator<Item = (DetectionId, DetectionId, f64)>,
    ) -> Result<Self> {
        let frames: HashMap<DetectionId, u32> = detections.iter().map(|d| (d.id, d.frame)).collect();
        let mut graph = Self::empty(window_frames);
        for (a, b, value) in edges {
            let (fa, fb) = match (frames.get(&a), frames.get(&b)) {
                (Some(fa), Some(fb)) => (*fa, *fb),
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "affinity edge {a}-{b} references an unknown detection"
                    )))
                }
            };
            let gap = fa.abs_diff(fb);
            if gap == 0 || gap > window_frames {
                return Err(Error::GapViolation {
                    from: a,
                    to: b,
                    gap: i64::from(fb) - i64::from(fa),
                    window: window_frames,
                });
            }
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "affinity {value} for {a}-{b} outside (0, 1]"
                )));
            }
            let key = if fa < fb { (a, b) } else { (b, a) };
            graph.edges.insert(key, value);
        }
        Ok(graph)
    }

    pub fn window_frames(&self) -> u32 {
        self.window_frames
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Affinity stored for the pair, in either argument order.
    pub fn get(&self, a: DetectionId, b: DetectionId) -> Option<f64> {
        self.edges.get(&(a, b)).or_else(|| self.edges.get(&(b, a))).copied()
    }

    /// Edges as `(earlier, later, affinity)` in canonical order.
    pub fn edges(&self) -> impl Iterator<Item = (DetectionId, DetectionId, f64)> + '_ {
        self.edges.iter().map(|(&(a, b), &v)| (a, b, v))
    }
}

/// Ids of the tracks whose position at the detection's frame lies inside
/// its box.
pub fn tracks_through(d: &Detection, tracks: &[PointTrack]) -> BTreeSet<TrackId> {
    tracks
        .iter()
        .filter(|t| t.position(d.frame).is_some_and(|p| d.bbox.contains(p)))
        .map(|t| t.track_id)
        .collect()
}

fn set_iou(a: &BTreeSet<TrackId>, b: &BTreeSet<TrackId>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// IoU of the track sets passing through the two detections; 0 when both
/// sets are empty.
pub fn of_affinity(d_i: &Detection, d_j: &Detection, tracks: &[PointTrack]) -> f64 {
    set_iou(&tracks_through(d_i, tracks), &tracks_through(d_j, tracks))
}

/// Motion prior used when two detections share no tracks: box overlap
/// decayed by the time between them.
pub fn fallback_affinity(d_i: &Detection, d_j: &Detection, fps: f64) -> f64 {
    let dt = f64::from(d_i.frame.abs_diff(d_j.frame));
    box_iou(&d_i.bbox, &d_j.bbox) * (-dt / fps).exp()
}

/// Builds the affinity graph over all pairs within the configured window.
///
/// Pairs with zero track overlap get no edge.
pub fn build_affinity_graph(detections: &[Detection], tracks: &[PointTrack], config: &EngineConfig) -> AffinityGraph {
    let window = config.window_frames();
    let mut graph = AffinityGraph::empty(window);
    if detections.is_empty() || tracks.is_empty() {
        return graph;
    }

    // frame -> live track positions
    let mut by_frame: HashMap<u32, Vec<(TrackId, Point)>> = HashMap::new();
    for t in tracks {
        for (k, p) in t.points().iter().enumerate() {
            by_frame
                .entry(t.start_frame() + k as u32)
                .or_default()
                .push((t.track_id, *p));
        }
    }

    let members: Vec<Vec<TrackId>> = detections
        .iter()
        .map(|d| {
            let mut ids: Vec<TrackId> = by_frame
                .get(&d.frame)
                .map(|v| {
                    v.iter()
                        .filter(|(_, p)| d.bbox.contains(*p))
                        .map(|(id, _)| *id)
                        .collect()
                })
                .unwrap_or_default();
            ids.sort_unstable();
            ids.dedup();
            ids
        })
        .collect();

    let mut inverted: HashMap<TrackId, Vec<usize>> = HashMap::new();
    for (i, ids) in members.iter().enumerate() {
        for id in ids {
            inverted.entry(*id).or_default().push(i);
        }
    }

    let mut shared: HashMap<(usize, usize), u32> = HashMap::new();
    for list in inverted.values_mut() {
        list.sort_unstable_by_key(|&i| (detections[i].frame, detections[i].id));
        for (a, &i) in list.iter().enumerate() {
            for &j in &list[a + 1..] {
                let gap = detections[j].frame - detections[i].frame;
                if gap > window {
                    break;
                }
                if gap == 0 {
                    continue;
                }
                *shared.entry((i, j)).or_insert(0) += 1;
            }
        }
    }

    for ((i, j), inter) in shared {
        let union = members[i].len() + members[j].len() - inter as usize;
        let value = f64::from(inter) / union as f64;
        graph.edges.insert((detections[i].id, detections[j].id), value);
    }
    graph
}
