//! Recall of ground-truth boxes at IoU thresholds, the annotation-time
//! model, and accuracy-versus-budget curves.
//!
//! Predictions and ground truth are matched by path id: each annotated
//! trajectory targets one known object, so there is no association step.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::model::{box_iou, BoxAnnotation, GroundTruth, PathAnnotation, PathId, Trajectory};
use crate::pipeline::Engine;
use crate::synth::{uniform_boxes, uniform_frames, Scenario};
use crate::trajectory::boxes_only_trajectory;

/// Constants of the annotation-time model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeModel {
    pub seconds_per_box: f64,
    /// Path annotation time relative to the path's real-time duration.
    pub path_slowdown: f64,
}

impl Default for TimeModel {
    fn default() -> Self {
        Self {
            seconds_per_box: 5.2,
            path_slowdown: 1.33,
        }
    }
}

/// One watch of the video, every path traced at slowed-down playback, and a
/// fixed cost per drawn box.
pub fn annotation_time(
    path_seconds: impl IntoIterator<Item = f64>,
    n_boxes: usize,
    video_duration: f64,
    model: &TimeModel,
) -> f64 {
    let paths: f64 = path_seconds.into_iter().map(|s| s * model.path_slowdown).sum();
    video_duration + paths + model.seconds_per_box * n_boxes as f64
}

/// Duration of each path in seconds, counting one frame per sample.
pub fn path_durations(paths: &[PathAnnotation], fps: f64) -> impl Iterator<Item = f64> + '_ {
    paths.iter().map(move |p| p.len() as f64 / fps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRecall {
    pub iou: f64,
    pub recalled: usize,
    pub total: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecall {
    pub path_id: PathId,
    pub gt_boxes: usize,
    pub predicted_boxes: usize,
    /// Recall per threshold, in the order of the report's thresholds.
    pub recall: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Budget {
    PathSupervised { boxes_per_trajectory: usize },
    BoxesOnly { seconds_between_boxes: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub thresholds: Vec<ThresholdRecall>,
    pub per_trajectory: Vec<TrajectoryRecall>,
    /// Ground-truth ids with no predicted trajectory; their boxes count as missed.
    pub missing_predictions: Vec<PathId>,
    /// Predicted ids with no ground truth; ignored for recall.
    pub unmatched_predictions: Vec<PathId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_annotation_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<Budget>,
}

impl EvalReport {
    pub fn recall(&self, iou: f64) -> Option<f64> {
        self.thresholds.iter().find(|t| t.iou == iou).map(|t| t.recall)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iou,recalled,total,recall\n");
        for t in &self.thresholds {
            let _ = writeln!(out, "{},{},{},{}", t.iou, t.recalled, t.total, t.recall);
        }
        out
    }
}

fn validate_thresholds(thresholds: &[f64]) -> Result<()> {
    for &t in thresholds {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidConfig(format!("IoU threshold {t} is outside [0, 1]")));
        }
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Fraction of ground-truth boxes whose same-id prediction at the same frame
/// overlaps them by at least each threshold.
pub fn recall_at_iou(pred: &[Trajectory], gt: &[GroundTruth], thresholds: &[f64]) -> Result<EvalReport> {
    validate_thresholds(thresholds)?;
    let pred_by_id: BTreeMap<PathId, &Trajectory> = pred.iter().map(|t| (t.path_id, t)).collect();
    let gt_ids: std::collections::BTreeSet<PathId> = gt.iter().map(|g| g.path_id).collect();

    let mut recalled = vec![0usize; thresholds.len()];
    let mut total = 0usize;
    let mut per_trajectory = Vec::with_capacity(gt.len());
    let mut missing_predictions = Vec::new();
    for g in gt {
        let p = pred_by_id.get(&g.path_id);
        if p.is_none() {
            missing_predictions.push(g.path_id);
        }
        let mut hits = vec![0usize; thresholds.len()];
        for (f, truth) in &g.boxes {
            let Some(b) = p.and_then(|p| p.get(*f)) else { continue };
            let iou = box_iou(b, truth);
            for (k, &alpha) in thresholds.iter().enumerate() {
                if iou >= alpha {
                    hits[k] += 1;
                }
            }
        }
        for (acc, h) in recalled.iter_mut().zip(&hits) {
            *acc += h;
        }
        total += g.boxes.len();
        per_trajectory.push(TrajectoryRecall {
            path_id: g.path_id,
            gt_boxes: g.boxes.len(),
            predicted_boxes: p.map_or(0, |p| p.entries.len()),
            recall: hits.iter().map(|&h| ratio(h, g.boxes.len())).collect(),
        });
    }
    let unmatched_predictions = pred_by_id.keys().filter(|id| !gt_ids.contains(id)).copied().collect();
    let thresholds = thresholds
        .iter()
        .zip(&recalled)
        .map(|(&iou, &r)| ThresholdRecall {
            iou,
            recalled: r,
            total,
            recall: ratio(r, total),
        })
        .collect();
    Ok(EvalReport {
        thresholds,
        per_trajectory,
        missing_predictions,
        unmatched_predictions,
        total_annotation_time: None,
        budget: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub budget: Budget,
    pub boxes: usize,
    pub time_seconds: f64,
    pub recall: Vec<ThresholdRecall>,
}

impl CurvePoint {
    pub fn recall_at(&self, iou: f64) -> Option<f64> {
        self.recall.iter().find(|t| t.iou == iou).map(|t| t.recall)
    }
}

/// Renders curve points as `budget,boxes,time_seconds,recall@<iou>...`.
pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("budget,boxes,time_seconds");
    if let Some(first) = points.first() {
        for t in &first.recall {
            let _ = write!(out, ",recall@{}", t.iou);
        }
    }
    out.push('\n');
    for p in points {
        let budget = match &p.budget {
            Budget::PathSupervised { boxes_per_trajectory } => boxes_per_trajectory.to_string(),
            Budget::BoxesOnly { seconds_between_boxes } => format!("every {seconds_between_boxes}s"),
        };
        let _ = write!(out, "{budget},{},{}", p.boxes, p.time_seconds);
        for t in &p.recall {
            let _ = write!(out, ",{}", t.recall);
        }
        out.push('\n');
    }
    out
}

/// Path-supervised accuracy and modeled time for each boxes-per-trajectory
/// budget. Both optimization stages run once; only the box-dependent part
/// is rebuilt per budget, in parallel.
pub fn efficiency_curve(
    scenario: &Scenario,
    budgets: &[usize],
    config: &EngineConfig,
    thresholds: &[f64],
    model: &TimeModel,
) -> Result<Vec<CurvePoint>> {
    validate_thresholds(thresholds)?;
    let prepared = Engine::new(config.clone())?.prepare(&scenario.detections, &scenario.tracks, &scenario.paths)?;
    let duration = scenario.config.duration_seconds();
    budgets
        .par_iter()
        .map(|&k| {
            let boxes = uniform_boxes(&scenario.ground_truth, k);
            let (trajectories, _) = prepared.build(&boxes)?;
            let report = recall_at_iou(&trajectories, &scenario.ground_truth, thresholds)?;
            Ok(CurvePoint {
                budget: Budget::PathSupervised {
                    boxes_per_trajectory: k,
                },
                boxes: boxes.len(),
                time_seconds: annotation_time(
                    path_durations(&scenario.paths, config.fps),
                    boxes.len(),
                    duration,
                    model,
                ),
                recall: report.thresholds,
            })
        })
        .collect()
}

/// Ground-truth boxes placed uniformly with roughly one box per `interval`
/// seconds along each object, endpoints included.
pub fn boxes_at_interval(ground_truth: &[GroundTruth], interval: f64, fps: f64) -> Vec<BoxAnnotation> {
    let mut out = Vec::new();
    for gt in ground_truth {
        let (Some(first), Some(last)) = (gt.first_frame(), gt.last_frame()) else {
            continue;
        };
        let span_seconds = f64::from(last - first) / fps;
        let k = (span_seconds / interval).ceil() as usize + 1;
        for f in uniform_frames(first, last, k) {
            out.push(BoxAnnotation {
                path_id: gt.path_id,
                frame: f,
                bbox: gt.boxes[&f],
            });
        }
    }
    out
}

/// Accuracy and modeled time of interpolating boxes alone, without paths or
/// detections, at the given box spacings. Objects' first and last frames
/// are taken from the ground truth.
pub fn boxes_only_curve(
    scenario: &Scenario,
    intervals: &[f64],
    thresholds: &[f64],
    model: &TimeModel,
) -> Result<Vec<CurvePoint>> {
    validate_thresholds(thresholds)?;
    let fps = scenario.config.fps;
    let duration = scenario.config.duration_seconds();
    intervals
        .par_iter()
        .map(|&interval| {
            if interval.is_nan() || interval <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "box interval must be positive, got {interval}"
                )));
            }
            let boxes = boxes_at_interval(&scenario.ground_truth, interval, fps);
            let trajectories: Vec<Trajectory> = scenario
                .ground_truth
                .iter()
                .filter_map(|g| {
                    let own: Vec<BoxAnnotation> = boxes.iter().filter(|b| b.path_id == g.path_id).cloned().collect();
                    Some(boxes_only_trajectory(
                        g.path_id,
                        g.first_frame()?,
                        g.last_frame()?,
                        &own,
                    ))
                })
                .collect();
            let report = recall_at_iou(&trajectories, &scenario.ground_truth, thresholds)?;
            Ok(CurvePoint {
                budget: Budget::BoxesOnly {
                    seconds_between_boxes: interval,
                },
                boxes: boxes.len(),
                time_seconds: annotation_time(std::iter::empty(), boxes.len(), duration, model),
                recall: report.thresholds,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BBox, BoxSource, TrajectoryEntry};
    use crate::synth::{generate_scenario, SynthConfig};
    use approx::assert_abs_diff_eq;

    fn traj(path_id: u64, boxes: &[(u32, BBox)]) -> Trajectory {
        let mut t = Trajectory::new(PathId(path_id));
        for (f, b) in boxes {
            t.entries.insert(
                *f,
                TrajectoryEntry {
                    bbox: *b,
                    source: BoxSource::Detected,
                },
            );
        }
        t
    }

    #[test]
    fn time_model_examples() {
        let m = TimeModel::default();
        assert_abs_diff_eq!(annotation_time([], 0, 60.0, &m), 60.0, epsilon = 1e-9);
        assert_abs_diff_eq!(annotation_time([60.0], 3, 60.0, &m), 155.4, epsilon = 1e-9);
        assert_abs_diff_eq!(annotation_time([], 7, 60.0, &m), 60.0 + 5.2 * 7.0, epsilon = 1e-9);
    }

    #[test]
    fn identity_and_disjoint() {
        let b = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let t = traj(1, &[(0, b), (1, b)]);
        let gt = vec![GroundTruth::from(&t)];
        let r = recall_at_iou(std::slice::from_ref(&t), &gt, &[0.5, 0.95, 1.0]).unwrap();
        assert!(r.thresholds.iter().all(|t| t.recall == 1.0));
        let shifted = traj(1, &[(0, b.translate(20.0, 0.0)), (1, b.translate(20.0, 0.0))]);
        let r = recall_at_iou(&[shifted], &gt, &[0.01, 0.5]).unwrap();
        assert!(r.thresholds.iter().all(|t| t.recall == 0.0));
    }

    #[test]
    fn hand_counted_recall() {
        // a 10x10 box against one shifted to give IoU 0.6 or 0.4
        let base = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let shift_for = |iou: f64| 10.0 * (1.0 - iou) / (1.0 + iou);
        let mut gt_boxes = Vec::new();
        let mut pred_boxes = Vec::new();
        for f in 0..10u32 {
            let iou = if f < 7 { 0.6 } else { 0.4 };
            gt_boxes.push((f, base));
            pred_boxes.push((f, base.translate(shift_for(iou), 0.0)));
        }
        assert_abs_diff_eq!(box_iou(&pred_boxes[0].1, &base), 0.6, epsilon = 1e-12);
        let gt = vec![GroundTruth::from(&traj(3, &gt_boxes))];
        let r = recall_at_iou(&[traj(3, &pred_boxes)], &gt, &[0.5, 0.7]).unwrap();
        assert_abs_diff_eq!(r.recall(0.5).unwrap(), 0.7, epsilon = 1e-12);
        assert_eq!(r.recall(0.7).unwrap(), 0.0);
        assert_eq!(r.thresholds[0].recalled, 7);
    }

    #[test]
    fn id_mismatch_is_reported() {
        let b = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let gt = vec![
            GroundTruth::from(&traj(1, &[(0, b)])),
            GroundTruth::from(&traj(2, &[(0, b)])),
        ];
        let r = recall_at_iou(&[traj(1, &[(0, b)]), traj(9, &[(0, b)])], &gt, &[0.5]).unwrap();
        assert_eq!(r.missing_predictions, vec![PathId(2)]);
        assert_eq!(r.unmatched_predictions, vec![PathId(9)]);
        assert_eq!(r.recall(0.5), Some(0.5));
        assert!(recall_at_iou(&[], &gt, &[1.5]).is_err());
    }

    #[test]
    fn recall_non_increasing_in_threshold() {
        let cfg = SynthConfig {
            n_objects: 3,
            n_frames: 60,
            ..SynthConfig::default()
        };
        let s = generate_scenario(&cfg).unwrap();
        let thresholds: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let points = efficiency_curve(&s, &[0, 2], &cfg.engine_config(), &thresholds, &TimeModel::default()).unwrap();
        for p in &points {
            for w in p.recall.windows(2) {
                assert!(w[0].recall >= w[1].recall);
            }
        }
        let again = efficiency_curve(&s, &[0, 2], &cfg.engine_config(), &thresholds, &TimeModel::default()).unwrap();
        assert_eq!(points, again);
    }

    #[test]
    fn noiseless_curve_is_monotone_and_saturates() {
        let cfg = SynthConfig {
            n_objects: 3,
            n_frames: 60,
            ..SynthConfig::noiseless()
        };
        let s = generate_scenario(&cfg).unwrap();
        let points =
            efficiency_curve(&s, &[0, 1, 3, 60], &cfg.engine_config(), &[0.95], &TimeModel::default()).unwrap();
        for w in points.windows(2) {
            assert!(w[0].recall[0].recall <= w[1].recall[0].recall);
            assert!(w[0].time_seconds < w[1].time_seconds);
        }
        assert_eq!(points[3].recall[0].recall, 1.0);
    }

    #[test]
    fn boxes_only_every_frame_is_exact() {
        let cfg = SynthConfig {
            n_objects: 2,
            n_frames: 40,
            ..SynthConfig::default()
        };
        let s = generate_scenario(&cfg).unwrap();
        let pts = boxes_only_curve(&s, &[1.0 / cfg.fps, 2.0], &[0.95], &TimeModel::default()).unwrap();
        assert_eq!(pts[0].recall[0].recall, 1.0);
        assert!(pts[1].boxes < pts[0].boxes);
        let csv = curve_csv(&pts);
        assert!(csv.starts_with("budget,boxes,time_seconds,recall@0.95\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
