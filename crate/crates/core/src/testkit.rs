//! Seeded random instances for oracle comparisons.
//!
//! Used by unit tests and the acceptance suite to pit the graph-cut and
//! shortest-path solvers against their exhaustive counterparts.

use rand::Rng;

use crate::affinity::AffinityGraph;
use crate::config::EngineConfig;
use crate::model::{BBox, Detection, DetectionId, PathAnnotation, PathId, Point};

pub struct PrelabelInstance {
    pub detections: Vec<Detection>,
    pub paths: Vec<PathAnnotation>,
    pub graph: AffinityGraph,
}

fn random_affinity<R: Rng>(rng: &mut R) -> f64 {
    match rng.random_range(0..3) {
        0 => rng.random_range(0.9..=1.0),
        1 => rng.random_range(0.3..0.9),
        _ => rng.random_range(0.001..0.3),
    }
}

/// Up to `n_detections` detections, one per frame, each feasible for a
/// random subset of `n_paths` paths (occasionally none, so it gets pruned),
/// with random affinities between pairs inside the window.
pub fn random_prelabel_instance<R: Rng>(
    rng: &mut R,
    n_detections: usize,
    n_paths: usize,
    config: &EngineConfig,
) -> PrelabelInstance {
    let window = config.window_frames();
    let mut frames = Vec::with_capacity(n_detections);
    let mut frame = 0u32;
    for _ in 0..n_detections {
        frames.push(frame);
        frame += rng.random_range(1..=window.clamp(1, 3));
    }
    let span = frame as usize;

    let mut samples = vec![vec![Point::new(-100.0, -100.0); span]; n_paths];
    let mut detections = Vec::with_capacity(n_detections);
    for (k, &f) in frames.iter().enumerate() {
        let bbox = BBox::new(
            rng.random_range(0.0..50.0),
            rng.random_range(0.0..50.0),
            rng.random_range(5.0..20.0),
            rng.random_range(5.0..20.0),
        )
        .expect("positive size");
        let prune_it = rng.random_bool(0.08);
        let mut any = false;
        for (p, path_samples) in samples.iter_mut().enumerate() {
            let last_chance = p + 1 == n_paths && !any;
            let inside = !prune_it && (rng.random_bool(0.6) || last_chance);
            any |= inside;
            path_samples[f as usize] = if inside {
                Point::new(
                    bbox.x + rng.random_range(0.0..=bbox.w),
                    bbox.y + rng.random_range(0.0..=bbox.h),
                )
            } else {
                Point::new(bbox.x + bbox.w + rng.random_range(1.0..30.0), bbox.y - 1.0)
            };
        }
        let score = rng.random_range(0.05..0.95);
        detections.push(Detection::new(DetectionId(k as u64 * 3 + 1), f, bbox, score).expect("valid score"));
    }

    let paths = samples
        .into_iter()
        .enumerate()
        .map(|(p, s)| PathAnnotation::new(PathId(p as u64 + 1), 0, s).expect("non-empty path"))
        .collect();

    let mut edges = Vec::new();
    for i in 0..detections.len() {
        for j in i + 1..detections.len() {
            let gap = detections[j].frame - detections[i].frame;
            if gap <= window && rng.random_bool(0.45) {
                edges.push((detections[i].id, detections[j].id, random_affinity(rng)));
            }
        }
    }
    let graph = AffinityGraph::from_edges(&detections, window, edges).expect("edges within window");
    PrelabelInstance {
        detections,
        paths,
        graph,
    }
}

pub struct LinkageInstance {
    pub detections: Vec<Detection>,
    pub graph: AffinityGraph,
    pub config: EngineConfig,
}

/// A random cluster of up to `n` detections over roughly `n` frames, with
/// repeated frames, sparse track affinities and overlapping boxes so that
/// both the affinity and the fallback transition costs come into play.
pub fn random_linkage_instance<R: Rng>(rng: &mut R, n: usize) -> LinkageInstance {
    let config = EngineConfig {
        fps: 2.0,
        window_seconds: rng.random_range(1.0..3.0),
        st_attach_seconds: rng.random_range(0.5..1.5),
        ..EngineConfig::default()
    };
    let horizon = (n as u32).max(1);
    let mut detections: Vec<Detection> = (0..n)
        .map(|k| {
            let bbox = BBox::new(
                rng.random_range(0.0..20.0),
                rng.random_range(0.0..20.0),
                rng.random_range(8.0..16.0),
                rng.random_range(8.0..16.0),
            )
            .expect("positive size");
            let score = rng.random_range(0.02..0.98);
            Detection::new(DetectionId(k as u64 + 10), rng.random_range(0..horizon), bbox, score).expect("valid score")
        })
        .collect();
    detections.sort_by_key(|d| (d.frame, d.id));

    let window = config.window_frames();
    let mut edges = Vec::new();
    for i in 0..detections.len() {
        for j in 0..detections.len() {
            let (a, b) = (&detections[i], &detections[j]);
            if a.frame < b.frame && b.frame - a.frame <= window && rng.random_bool(0.5) {
                edges.push((a.id, b.id, random_affinity(rng)));
            }
        }
    }
    let graph = AffinityGraph::from_edges(&detections, window, edges).expect("edges within window");
    LinkageInstance {
        detections,
        graph,
        config,
    }
}
