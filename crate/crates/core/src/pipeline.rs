//! End-to-end inference: affinities, prelabeling, linkage, trajectories.
//!
//! [`Engine::prepare`] runs the two optimization stages once; the result
//! can then be rebuilt cheaply for any set of box annotations, which is how
//! box supervision stays a fast update.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::affinity::{build_affinity_graph, AffinityGraph};
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::linkage::{link_cluster, ClusterLink, LinkedPath};
use crate::model::{BoxAnnotation, Detection, DetectionId, PathAnnotation, PathId, PointTrack, Trajectory};
use crate::prelabel::{solve_prelabel, LabelAssignment};
use crate::trajectory::{average_anchor_gap_seconds, build_all};

#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    jobs: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct StageTimings {
    pub affinity_ms: f64,
    pub prelabel_ms: f64,
    pub linkage_ms: f64,
    pub build_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterReport {
    pub path_id: PathId,
    pub cluster_size: usize,
    pub chosen: usize,
    pub segments: usize,
    pub linkage_cost: Option<f64>,
    pub supervised_boxes: usize,
    pub average_anchor_gap_seconds: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub detections: usize,
    pub tracks: usize,
    pub paths: usize,
    pub affinity_edges: usize,
    pub pruned: usize,
    pub prelabel_energy: f64,
    pub prelabel_moves: usize,
    pub linkage_cost: f64,
    pub clusters: Vec<ClusterReport>,
    pub failures: Vec<PathId>,
    pub warnings: Vec<String>,
    pub timings: StageTimings,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub trajectories: Vec<Trajectory>,
    pub report: RunReport,
}

/// Output of both optimization stages, ready to be turned into
/// trajectories for any box set.
#[derive(Debug, Clone)]
pub struct Prepared {
    config: EngineConfig,
    detections: Vec<Detection>,
    paths: Vec<PathAnnotation>,
    track_count: usize,
    pub graph: AffinityGraph,
    pub assignment: LabelAssignment,
    pub links: BTreeMap<PathId, ClusterLink>,
    warnings: Vec<String>,
    timings: StageTimings,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn check_unique<T: Ord + Copy + std::fmt::Display>(what: &str, ids: impl Iterator<Item = T>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::Duplicate(format!("{what} id {id}")));
        }
    }
    Ok(())
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, jobs: None })
    }

    /// Bounds the worker threads used for per-cluster linkage.
    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = Some(jobs.max(1));
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn prepare(
        &self,
        detections: &[Detection],
        tracks: &[PointTrack],
        paths: &[PathAnnotation],
    ) -> Result<Prepared> {
        check_unique("detection", detections.iter().map(|d| d.id))?;
        check_unique("path", paths.iter().map(|p| p.path_id))?;
        let config = &self.config;
        let mut timings = StageTimings::default();

        let t = Instant::now();
        let graph = build_affinity_graph(detections, tracks, config);
        timings.affinity_ms = ms_since(t);

        let t = Instant::now();
        let assignment = solve_prelabel(detections, paths, &graph, config);
        timings.prelabel_ms = ms_since(t);

        let t = Instant::now();
        let by_id: BTreeMap<DetectionId, &Detection> = detections.iter().map(|d| (d.id, d)).collect();
        let clusters: Vec<(PathId, Vec<&Detection>)> = assignment
            .clusters(paths)
            .into_iter()
            .filter(|(_, ids)| !ids.is_empty())
            .map(|(p, ids)| (p, ids.iter().map(|id| by_id[id]).collect()))
            .collect();
        let solve = || -> Vec<(PathId, Result<ClusterLink>)> {
            clusters
                .par_iter()
                .map(|(p, members)| (*p, link_cluster(*p, members, &graph, config)))
                .collect()
        };
        let solved = match self.jobs {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(e.to_string()))?
                .install(solve),
            None => solve(),
        };
        let mut links = BTreeMap::new();
        let mut warnings = Vec::new();
        for (path_id, result) in solved {
            match result {
                Ok(link) => {
                    if link.segments > 1 {
                        warnings.push(format!(
                            "path {path_id}: detections split into {} segments by gaps over the window",
                            link.segments
                        ));
                    }
                    links.insert(path_id, link);
                }
                Err(e) => warnings.push(format!("path {path_id}: linkage failed ({e}), using annotations only")),
            }
        }
        timings.linkage_ms = ms_since(t);

        Ok(Prepared {
            config: config.clone(),
            detections: detections.to_vec(),
            paths: paths.to_vec(),
            track_count: tracks.len(),
            graph,
            assignment,
            links,
            warnings,
            timings,
        })
    }

    pub fn run(
        &self,
        detections: &[Detection],
        tracks: &[PointTrack],
        paths: &[PathAnnotation],
        boxes: &[BoxAnnotation],
    ) -> Result<PipelineOutput> {
        self.prepare(detections, tracks, paths)?.finish(boxes)
    }
}

impl Prepared {
    pub fn paths(&self) -> &[PathAnnotation] {
        &self.paths
    }

    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    pub fn linked(&self) -> BTreeMap<PathId, LinkedPath> {
        self.links.iter().map(|(p, l)| (*p, l.linked.clone())).collect()
    }

    /// Trajectories for the given boxes, plus the paths that could not be
    /// anchored at all.
    pub fn build(&self, boxes: &[BoxAnnotation]) -> Result<(Vec<Trajectory>, Vec<PathId>)> {
        let by_id: BTreeMap<DetectionId, &Detection> = self.detections.iter().map(|d| (d.id, d)).collect();
        let out = build_all(&self.linked(), &by_id, &self.paths, boxes, &self.config)?;
        Ok((out.trajectories, out.failures))
    }

    pub fn finish(&self, boxes: &[BoxAnnotation]) -> Result<PipelineOutput> {
        let t = Instant::now();
        let (trajectories, failures) = self.build(boxes)?;
        let mut timings = self.timings.clone();
        timings.build_ms = ms_since(t);

        let mut warnings = self.warnings.clone();
        for p in &failures {
            warnings.push(format!("path {p}: no detections and no boxes, no trajectory produced"));
        }
        let sizes: BTreeMap<PathId, usize> = self
            .assignment
            .clusters(&self.paths)
            .into_iter()
            .map(|(p, ids)| (p, ids.len()))
            .collect();
        let traj_by_path: BTreeMap<PathId, &Trajectory> = trajectories.iter().map(|t| (t.path_id, t)).collect();
        let clusters = sizes
            .iter()
            .map(|(p, &size)| {
                let link = self.links.get(p);
                ClusterReport {
                    path_id: *p,
                    cluster_size: size,
                    chosen: link.map_or(0, |l| l.linked.chosen.len()),
                    segments: link.map_or(0, |l| l.segments),
                    linkage_cost: link.map(|l| l.linked.total_cost),
                    supervised_boxes: boxes.iter().filter(|b| b.path_id == *p).count(),
                    average_anchor_gap_seconds: traj_by_path
                        .get(p)
                        .and_then(|t| average_anchor_gap_seconds(t, self.config.fps)),
                }
            })
            .collect();
        let report = RunReport {
            detections: self.detections.len(),
            tracks: self.track_count,
            paths: self.paths.len(),
            affinity_edges: self.graph.len(),
            pruned: self.assignment.pruned.len(),
            prelabel_energy: self.assignment.energy,
            prelabel_moves: self.assignment.energy_trace.len().saturating_sub(1),
            linkage_cost: self.links.values().map(|l| l.linked.total_cost).sum(),
            clusters,
            failures,
            warnings,
            timings,
        };
        Ok(PipelineOutput { trajectories, report })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BBox, Point, TrackId};

    #[test]
    fn two_objects_end_to_end() {
        let config = EngineConfig::with_fps(10.0);
        let mut dets = Vec::new();
        let mut tracks = Vec::new();
        let mut paths = Vec::new();
        for obj in 0..2u64 {
            let y = obj as f64 * 100.0;
            for f in 0..30u32 {
                if f % 7 == 3 {
                    continue; // missed
                }
                let bbox = BBox::new(f as f64 * 2.0, y, 20.0, 40.0).unwrap();
                dets.push(Detection::new(DetectionId(obj * 100 + u64::from(f)), f, bbox, 0.9).unwrap());
            }
            for k in 0..4u64 {
                let pts = (0..30)
                    .map(|f| Point::new(f as f64 * 2.0 + 4.0 + k as f64 * 3.0, y + 10.0))
                    .collect();
                tracks.push(PointTrack::new(TrackId(obj * 10 + k), 0, pts).unwrap());
            }
            let samples = (0..30).map(|f| Point::new(f as f64 * 2.0 + 10.0, y + 20.0)).collect();
            paths.push(PathAnnotation::new(PathId(obj), 0, samples).unwrap());
        }
        // a false positive nowhere near any path
        dets.push(Detection::new(DetectionId(999), 5, BBox::new(500.0, 500.0, 10.0, 10.0).unwrap(), 0.3).unwrap());

        let engine = Engine::new(config).unwrap().with_jobs(2);
        let out = engine.run(&dets, &tracks, &paths, &[]).unwrap();
        assert_eq!(out.trajectories.len(), 2);
        assert_eq!(out.report.pruned, 1);
        assert!(out.report.failures.is_empty());
        for t in &out.trajectories {
            assert!(t.is_contiguous());
            assert_eq!(t.entries.len(), 30);
            let y = t.path_id.0 as f64 * 100.0;
            for (f, e) in &t.entries {
                assert!((e.bbox.y - y).abs() < 1e-9);
                assert!((e.bbox.x - f64::from(*f) * 2.0).abs() < 1e-9);
            }
        }
        let again = engine.run(&dets, &tracks, &paths, &[]).unwrap();
        assert_eq!(again.trajectories, out.trajectories);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let engine = Engine::new(EngineConfig::default()).unwrap();
        let bbox = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let d = Detection::new(DetectionId(1), 0, bbox, 0.5).unwrap();
        assert!(matches!(
            engine.run(&[d.clone(), d], &[], &[], &[]),
            Err(Error::Duplicate(_))
        ));
    }

    #[test]
    fn annotation_less_path_is_a_failure() {
        let engine = Engine::new(EngineConfig::with_fps(10.0)).unwrap();
        let path = PathAnnotation::new(PathId(7), 0, vec![Point::new(1.0, 1.0); 5]).unwrap();
        let out = engine.run(&[], &[], &[path], &[]).unwrap();
        assert!(out.trajectories.is_empty());
        assert_eq!(out.report.failures, vec![PathId(7)]);
    }
}
