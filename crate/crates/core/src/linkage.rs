//! Stage two: pick the cheapest time-ordered detection chain per cluster.
//!
//! Each cluster becomes a DAG: detections are nodes carrying a confidence
//! cost `log((1 - s) / s)`, forward edges within the window carry a
//! transition cost `-log(a_ij)`, a virtual source attaches to the earliest
//! detections and a virtual sink to the latest. Confidence costs are negative
//! for confident detections, which is fine because the graph is acyclic and
//! is relaxed in frame order.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::affinity::{fallback_affinity, AffinityGraph};
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::model::{Detection, DetectionId, PathId};

pub const BRUTE_FORCE_MAX_NODES: usize = 12;

/// `log((1 - s) / s)`: negative for confident detections.
pub fn confidence_cost(s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::ConfidenceOutOfRange(s));
    }
    Ok(((1.0 - s) / s).ln())
}

/// `-log(max(a, floor))`, where `a` is the track affinity when the graph has
/// an edge and the motion fallback otherwise.
pub fn transition_cost(from: &Detection, to: &Detection, graph: &AffinityGraph, config: &EngineConfig) -> Result<f64> {
    let gap = i64::from(to.frame) - i64::from(from.frame);
    let window = config.window_frames();
    if gap <= 0 || gap > i64::from(window) {
        return Err(Error::GapViolation {
            from: from.id,
            to: to.id,
            gap,
            window,
        });
    }
    let a = graph
        .get(from.id, to.id)
        .unwrap_or_else(|| fallback_affinity(from, to, config.fps));
    Ok(-a.max(config.affinity_floor).ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterNode {
    pub id: DetectionId,
    pub frame: u32,
    pub observation_cost: f64,
}

/// DAG over one cluster's detections, sorted by `(frame, id)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGraph {
    pub path_id: PathId,
    pub nodes: Vec<ClusterNode>,
    /// Outgoing `(target, cost)` per node; targets are strictly later.
    pub transitions: Vec<Vec<(usize, f64)>>,
    pub source: Vec<bool>,
    pub sink: Vec<bool>,
}

impl ClusterGraph {
    pub fn build(
        path_id: PathId,
        members: &[&Detection],
        graph: &AffinityGraph,
        config: &EngineConfig,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyCluster);
        }
        let mut sorted: Vec<&Detection> = members.to_vec();
        sorted.sort_by_key(|d| (d.frame, d.id));
        let window = config.window_frames();
        let attach = config.attach_frames();
        let first = sorted[0].frame;
        let last = sorted[sorted.len() - 1].frame;

        let mut nodes = Vec::with_capacity(sorted.len());
        let mut transitions = vec![Vec::new(); sorted.len()];
        for (i, d) in sorted.iter().enumerate() {
            nodes.push(ClusterNode {
                id: d.id,
                frame: d.frame,
                observation_cost: confidence_cost(d.score)?,
            });
            for (j, e) in sorted.iter().enumerate().skip(i + 1) {
                if e.frame == d.frame {
                    continue;
                }
                if e.frame - d.frame > window {
                    break;
                }
                transitions[i].push((j, transition_cost(d, e, graph, config)?));
            }
        }
        let source = sorted.iter().map(|d| d.frame - first <= attach).collect();
        let sink = sorted.iter().map(|d| last - d.frame <= attach).collect();
        Ok(Self {
            path_id,
            nodes,
            transitions,
            source,
            sink,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn transition(&self, i: usize, j: usize) -> Option<f64> {
        self.transitions[i].iter().find(|(t, _)| *t == j).map(|e| e.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkedPath {
    pub path_id: PathId,
    pub chosen: Vec<DetectionId>,
    pub total_cost: f64,
}

/// Candidate ordering: lower cost, then fewer detections, then the
/// lexicographically smaller id sequence.
fn compare_candidates(a: (f64, &[DetectionId]), b: (f64, &[DetectionId])) -> Ordering {
    a.0.total_cmp(&b.0)
        .then(a.1.len().cmp(&b.1.len()))
        .then_with(|| a.1.cmp(b.1))
}

/// Minimum-cost source-to-sink chain by dynamic programming in frame order.
pub fn solve_linkage(cluster: &ClusterGraph) -> Result<LinkedPath> {
    if cluster.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let n = cluster.len();
    // best[j] = (cost, id sequence ending at j)
    let mut best: Vec<Option<(f64, Vec<DetectionId>)>> = vec![None; n];
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, out) in cluster.transitions.iter().enumerate() {
        for &(j, w) in out {
            incoming[j].push((i, w));
        }
    }
    for j in 0..n {
        let node = &cluster.nodes[j];
        let mut current: Option<(f64, Vec<DetectionId>)> = None;
        let mut offer = |cost: f64, prefix: &[DetectionId]| {
            let better = match &current {
                None => true,
                Some((c, seq)) => compare_candidates((cost, prefix), (*c, &seq[..seq.len() - 1])) == Ordering::Less,
            };
            if better {
                let mut seq = prefix.to_vec();
                seq.push(node.id);
                current = Some((cost, seq));
            }
        };
        if cluster.source[j] {
            offer(node.observation_cost, &[]);
        }
        for &(i, w) in &incoming[j] {
            if let Some((c, seq)) = &best[i] {
                offer(c + w + node.observation_cost, seq);
            }
        }
        best[j] = current;
    }

    let mut answer: Option<(f64, Vec<DetectionId>)> = None;
    for j in (0..n).filter(|&j| cluster.sink[j]) {
        if let Some((c, seq)) = &best[j] {
            let better = answer
                .as_ref()
                .is_none_or(|(bc, bs)| compare_candidates((*c, seq), (*bc, bs)) == Ordering::Less);
            if better {
                answer = Some((*c, seq.clone()));
            }
        }
    }
    let (total_cost, chosen) = answer.ok_or(Error::NoPath(cluster.path_id))?;
    Ok(LinkedPath {
        path_id: cluster.path_id,
        chosen,
        total_cost,
    })
}

/// Exhaustive minimum over every source-to-sink chain, for small clusters.
pub fn brute_force_linkage(cluster: &ClusterGraph) -> Result<LinkedPath> {
    let n = cluster.len();
    if n > BRUTE_FORCE_MAX_NODES {
        return Err(Error::InstanceTooLarge(format!(
            "{n} nodes, limit {BRUTE_FORCE_MAX_NODES}"
        )));
    }
    let mut answer: Option<(f64, Vec<DetectionId>)> = None;
    for mask in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|k| mask & (1 << k) != 0).collect();
        if !cluster.source[members[0]] || !cluster.sink[*members.last().unwrap()] {
            continue;
        }
        let mut cost = cluster.nodes[members[0]].observation_cost;
        let mut valid = true;
        for pair in members.windows(2) {
            match cluster.transition(pair[0], pair[1]) {
                Some(w) => cost = cost + w + cluster.nodes[pair[1]].observation_cost,
                None => {
                    valid = false;
                    break;
                }
            }
        }
        if !valid {
            continue;
        }
        let ids: Vec<DetectionId> = members.iter().map(|&k| cluster.nodes[k].id).collect();
        let better = answer
            .as_ref()
            .is_none_or(|(bc, bs)| compare_candidates((cost, &ids), (*bc, bs)) == Ordering::Less);
        if better {
            answer = Some((cost, ids));
        }
    }
    let (total_cost, chosen) = answer.ok_or(Error::NoPath(cluster.path_id))?;
    Ok(LinkedPath {
        path_id: cluster.path_id,
        chosen,
        total_cost,
    })
}

/// Linkage result for a whole cluster, possibly stitched from segments.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLink {
    pub linked: LinkedPath,
    /// Number of independently solved segments.
    pub segments: usize,
}

/// Solves one cluster, splitting it wherever consecutive detections are
/// further apart than the transition window. Each segment gets its own
/// source and sink attachments; the gaps between segments are later bridged
/// by interpolation.
pub fn link_cluster(
    path_id: PathId,
    members: &[&Detection],
    graph: &AffinityGraph,
    config: &EngineConfig,
) -> Result<ClusterLink> {
    if members.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let mut sorted: Vec<&Detection> = members.to_vec();
    sorted.sort_by_key(|d| (d.frame, d.id));
    let window = config.window_frames();

    let mut segments: Vec<Vec<&Detection>> = vec![Vec::new()];
    for d in sorted {
        if let Some(prev) = segments.last().and_then(|s| s.last()) {
            if d.frame - prev.frame > window {
                segments.push(Vec::new());
            }
        }
        segments.last_mut().expect("non-empty").push(d);
    }
    if segments.len() > 1 {
        log::warn!(
            "path {path_id}: cluster split into {} segments by gaps over {window} frames",
            segments.len()
        );
    }

    let mut chosen = Vec::new();
    let mut total_cost = 0.0;
    for segment in &segments {
        let cluster = ClusterGraph::build(path_id, segment, graph, config)?;
        let linked = solve_linkage(&cluster)?;
        chosen.extend(linked.chosen);
        total_cost += linked.total_cost;
    }
    Ok(ClusterLink {
        linked: LinkedPath {
            path_id,
            chosen,
            total_cost,
        },
        segments: segments.len(),
    })
}

/// Frame of every chosen detection, in order.
pub fn chosen_frames(linked: &LinkedPath, detections: &BTreeMap<DetectionId, &Detection>) -> Vec<u32> {
    linked.chosen.iter().map(|id| detections[id].frame).collect()
}
