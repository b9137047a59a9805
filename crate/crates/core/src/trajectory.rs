//! Dense trajectories from linked detections and box supervision.
//!
//! Chosen detections and supervised boxes are anchors. Frames between
//! anchors are filled by linear interpolation; frames of the path span
//! outside the first/last anchor follow the path, keeping the anchor's size
//! and its offset from the cursor sample.

use std::collections::{BTreeMap, BTreeSet};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::linkage::LinkedPath;
use crate::model::{
    lerp_box, BBox, BoxAnnotation, BoxSource, Detection, DetectionId, PathAnnotation, PathId, Trajectory,
    TrajectoryEntry,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub frame: u32,
    pub bbox: BBox,
    pub source: BoxSource,
}

/// Fills every frame between consecutive anchors. Anchors must be sorted by
/// frame with no duplicates.
pub fn interpolate_anchors(path_id: PathId, anchors: &[Anchor]) -> Trajectory {
    let mut traj = Trajectory::new(path_id);
    for (k, a) in anchors.iter().enumerate() {
        traj.entries.insert(
            a.frame,
            TrajectoryEntry {
                bbox: a.bbox,
                source: a.source,
            },
        );
        if let Some(b) = anchors.get(k + 1) {
            let span = f64::from(b.frame - a.frame);
            for f in a.frame + 1..b.frame {
                let t = f64::from(f - a.frame) / span;
                traj.entries.insert(
                    f,
                    TrajectoryEntry {
                        bbox: lerp_box(&a.bbox, &b.bbox, t),
                        source: BoxSource::Interpolated,
                    },
                );
            }
        }
    }
    traj
}

/// Trajectory through the chosen detections, marked `detected`, with the
/// gaps between them interpolated.
pub fn interpolate(linked: &LinkedPath, detections: &BTreeMap<DetectionId, &Detection>) -> Trajectory {
    let anchors: Vec<Anchor> = linked
        .chosen
        .iter()
        .map(|id| {
            let d = detections[id];
            Anchor {
                frame: d.frame,
                bbox: d.bbox,
                source: BoxSource::Detected,
            }
        })
        .collect();
    interpolate_anchors(linked.path_id, &anchors)
}

/// Extends a partial trajectory over the whole path span. Frames before the
/// first and after the last entry are re-centered on the path sample,
/// carrying the nearest entry's size and box-center-to-sample offset.
pub fn extend_to_span(partial: Trajectory, path: &PathAnnotation) -> Trajectory {
    let (Some(first), Some(last)) = (partial.first_frame(), partial.last_frame()) else {
        return partial;
    };
    let mut traj = partial;
    let carry = |anchor_frame: u32, bbox: BBox, f: u32| -> BBox {
        let offset = match path.sample(anchor_frame) {
            Some(p) => (bbox.center().x - p.x, bbox.center().y - p.y),
            None => (0.0, 0.0),
        };
        match path.sample(f) {
            Some(p) => BBox {
                x: p.x + offset.0 - bbox.w / 2.0,
                y: p.y + offset.1 - bbox.h / 2.0,
                ..bbox
            },
            None => bbox,
        }
    };
    let head = traj.entries[&first].bbox;
    let tail = traj.entries[&last].bbox;
    for f in path.first_frame()..first {
        traj.entries.insert(
            f,
            TrajectoryEntry {
                bbox: carry(first, head, f),
                source: BoxSource::Extrapolated,
            },
        );
    }
    for f in last + 1..=path.last_frame() {
        traj.entries.insert(
            f,
            TrajectoryEntry {
                bbox: carry(last, tail, f),
                source: BoxSource::Extrapolated,
            },
        );
    }
    traj
}

/// Checks that every box belongs to `path`, lies inside its span, and that
/// no two boxes share a frame.
pub fn validate_boxes(path: &PathAnnotation, boxes: &[BoxAnnotation]) -> Result<()> {
    let mut frames = BTreeSet::new();
    for b in boxes {
        if b.path_id != path.path_id {
            return Err(Error::UnknownPath(b.path_id));
        }
        if !path.contains_frame(b.frame) {
            return Err(Error::BoxOutsideSpan {
                path_id: path.path_id,
                frame: b.frame,
                first: path.first_frame(),
                last: path.last_frame(),
            });
        }
        if !frames.insert(b.frame) {
            return Err(Error::DuplicateSupervisedBox {
                path_id: path.path_id,
                frame: b.frame,
            });
        }
    }
    Ok(())
}

/// Anchor set after box supervision: every box, plus the chosen detections
/// strictly farther than `box_removal_seconds` from all boxes.
pub fn supervised_anchors(
    linked: Option<&LinkedPath>,
    detections: &BTreeMap<DetectionId, &Detection>,
    boxes: &[BoxAnnotation],
    config: &EngineConfig,
) -> Vec<Anchor> {
    let near_box = |frame: u32| {
        boxes
            .iter()
            .any(|b| f64::from(b.frame.abs_diff(frame)) / config.fps < config.box_removal_seconds)
    };
    let mut anchors: Vec<Anchor> = linked
        .map(|l| l.chosen.as_slice())
        .unwrap_or_default()
        .iter()
        .map(|id| detections[id])
        .filter(|d| !near_box(d.frame))
        .map(|d| Anchor {
            frame: d.frame,
            bbox: d.bbox,
            source: BoxSource::Detected,
        })
        .collect();
    anchors.extend(boxes.iter().map(|b| Anchor {
        frame: b.frame,
        bbox: b.bbox,
        source: BoxSource::Supervised,
    }));
    anchors.sort_by_key(|a| a.frame);
    anchors
}

/// Inserts supervised boxes into the detection chain, removes temporally
/// close detections, and rebuilds the dense trajectory over the path span.
pub fn apply_box_supervision(
    linked: Option<&LinkedPath>,
    detections: &BTreeMap<DetectionId, &Detection>,
    path: &PathAnnotation,
    boxes: &[BoxAnnotation],
    config: &EngineConfig,
) -> Result<Trajectory> {
    validate_boxes(path, boxes)?;
    let anchors = supervised_anchors(linked, detections, boxes, config);
    Ok(extend_to_span(interpolate_anchors(path.path_id, &anchors), path))
}

/// Mean time between consecutive anchors, in seconds.
pub fn average_anchor_gap_seconds(traj: &Trajectory, fps: f64) -> Option<f64> {
    let anchors: Vec<u32> = traj
        .entries
        .iter()
        .filter(|(_, e)| matches!(e.source, BoxSource::Detected | BoxSource::Supervised))
        .map(|(f, _)| *f)
        .collect();
    if anchors.len() < 2 {
        return None;
    }
    let total = f64::from(anchors[anchors.len() - 1] - anchors[0]);
    Some(total / (anchors.len() - 1) as f64 / fps)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildOutput {
    pub trajectories: Vec<Trajectory>,
    /// Paths with neither linked detections nor boxes.
    pub failures: Vec<PathId>,
}

/// One trajectory per path. Paths without detections fall back to their
/// boxes; paths with neither are reported as failures.
pub fn build_all(
    linked: &BTreeMap<PathId, LinkedPath>,
    detections: &BTreeMap<DetectionId, &Detection>,
    paths: &[PathAnnotation],
    boxes: &[BoxAnnotation],
    config: &EngineConfig,
) -> Result<BuildOutput> {
    let mut by_path: BTreeMap<PathId, Vec<BoxAnnotation>> = BTreeMap::new();
    let known: BTreeSet<PathId> = paths.iter().map(|p| p.path_id).collect();
    for b in boxes {
        if !known.contains(&b.path_id) {
            return Err(Error::UnknownPath(b.path_id));
        }
        by_path.entry(b.path_id).or_default().push(b.clone());
    }
    let mut sorted: Vec<&PathAnnotation> = paths.iter().collect();
    sorted.sort_by_key(|p| p.path_id);

    let mut out = BuildOutput::default();
    for path in sorted {
        let path_boxes = by_path.get(&path.path_id).map(Vec::as_slice).unwrap_or_default();
        let link = linked.get(&path.path_id).filter(|l| !l.chosen.is_empty());
        if link.is_none() && path_boxes.is_empty() {
            out.failures.push(path.path_id);
            continue;
        }
        out.trajectories
            .push(apply_box_supervision(link, detections, path, path_boxes, config)?);
    }
    Ok(out)
}

/// Interpolation through boxes alone over `first..=last`, holding the first
/// and last box constant outside them. This is the keyframe-only baseline
/// that path supervision is compared against.
pub fn boxes_only_trajectory(path_id: PathId, first: u32, last: u32, boxes: &[BoxAnnotation]) -> Trajectory {
    let mut anchors: Vec<Anchor> = boxes
        .iter()
        .map(|b| Anchor {
            frame: b.frame,
            bbox: b.bbox,
            source: BoxSource::Supervised,
        })
        .collect();
    anchors.sort_by_key(|a| a.frame);
    anchors.dedup_by_key(|a| a.frame);
    let mut traj = interpolate_anchors(path_id, &anchors);
    if let (Some(head), Some(tail)) = (anchors.first(), anchors.last()) {
        for f in first..head.frame {
            traj.entries.insert(
                f,
                TrajectoryEntry {
                    bbox: head.bbox,
                    source: BoxSource::Extrapolated,
                },
            );
        }
        for f in tail.frame + 1..=last {
            traj.entries.insert(
                f,
                TrajectoryEntry {
                    bbox: tail.bbox,
                    source: BoxSource::Extrapolated,
                },
            );
        }
    }
    traj
}
