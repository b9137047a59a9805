//! Stage one: assign every detection to a path.
//!
//! The labeling minimizes
//!
//! ```text
//! E(y) = sum_i U(d_i, y_i) + sum_(i,j) W(a_ij) * [y_i != y_j]
//! ```
//!
//! where `U` is 0 when the path's sample at the detection's frame falls in
//! the box and infinite otherwise, and `W` is a separation penalty that grows
//! with the affinity of the two detections. The pairwise term is a Potts
//! potential, so graph cuts apply: components with two candidate labels are
//! solved exactly with one cut. Larger label sets run expansion and swap
//! moves from several starting labelings; because those moves only reach
//! strong local optima, the best result then seeds a branch and bound that
//! proves or improves it within a fixed search budget.

use std::collections::{BTreeMap, BTreeSet};

use crate::affinity::AffinityGraph;
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::maxflow::FlowNetwork;
use crate::model::{Detection, DetectionId, PathAnnotation, PathId};

/// Exhaustive search limits for [`brute_force_prelabel`].
pub const BRUTE_FORCE_MAX_DETECTIONS: usize = 14;
pub const BRUTE_FORCE_MAX_PATHS: usize = 3;

/// Energy decreases smaller than this are treated as no improvement.
const MOVE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelAssignment {
    pub labels: BTreeMap<DetectionId, PathId>,
    pub pruned: BTreeSet<DetectionId>,
    pub energy: f64,
    /// Global energy after initialization and after every accepted move.
    pub energy_trace: Vec<f64>,
    /// Multi-label components where the bounded exact search beat the
    /// graph-cut moves.
    pub refined_components: usize,
}

impl LabelAssignment {
    /// Detection ids grouped by label; every path gets an entry.
    pub fn clusters(&self, paths: &[PathAnnotation]) -> BTreeMap<PathId, Vec<DetectionId>> {
        let mut out: BTreeMap<PathId, Vec<DetectionId>> = paths.iter().map(|p| (p.path_id, Vec::new())).collect();
        for (d, p) in &self.labels {
            out.entry(*p).or_default().push(*d);
        }
        out
    }
}

/// 0 when the path has a sample at the detection's frame that lies inside
/// the box, `+inf` otherwise.
pub fn unary_cost(d: &Detection, path: &PathAnnotation) -> f64 {
    match path.sample(d.frame) {
        Some(p) if d.bbox.contains(p) => 0.0,
        _ => f64::INFINITY,
    }
}

/// Penalty for giving two detections with affinity `a` different labels:
/// `-log(1 - a + floor)`, clamped to `[0, separation_cap]`.
pub fn separation_cost(a: f64, config: &EngineConfig) -> f64 {
    let raw = -(1.0 - a + config.affinity_floor).ln();
    raw.clamp(0.0, config.separation_cap)
}

/// Splits detections into those with at least one finite unary and those
/// with none.
pub fn prune<'a>(detections: &'a [Detection], paths: &[PathAnnotation]) -> (Vec<&'a Detection>, Vec<&'a Detection>) {
    detections
        .iter()
        .partition(|d| paths.iter().any(|p| unary_cost(d, p).is_finite()))
}

/// Energy of a labeling over the kept detections. Returns `+inf` when a
/// label is infeasible.
pub fn labeling_energy(
    detections: &[Detection],
    paths: &[PathAnnotation],
    graph: &AffinityGraph,
    labels: &BTreeMap<DetectionId, PathId>,
    config: &EngineConfig,
) -> f64 {
    let path_by_id: BTreeMap<PathId, &PathAnnotation> = paths.iter().map(|p| (p.path_id, p)).collect();
    let mut energy = 0.0;
    for d in detections {
        if let Some(label) = labels.get(&d.id) {
            energy += path_by_id.get(label).map_or(f64::INFINITY, |p| unary_cost(d, p));
        }
    }
    for (a, b, value) in graph.edges() {
        if let (Some(la), Some(lb)) = (labels.get(&a), labels.get(&b)) {
            if la != lb {
                energy += separation_cost(value, config);
            }
        }
    }
    energy
}

/// Feasible labels, initial labels and pairwise terms over kept detections.
struct Problem<'a> {
    kept: Vec<&'a Detection>,
    pruned: Vec<DetectionId>,
    path_ids: Vec<PathId>,
    /// Ascending label indices per kept detection.
    feasible: Vec<Vec<usize>>,
    /// `(i, j, w)` over kept detection indices.
    edges: Vec<(usize, usize, f64)>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl<'a> Problem<'a> {
    fn new(
        detections: &'a [Detection],
        paths: &[PathAnnotation],
        graph: &AffinityGraph,
        config: &EngineConfig,
    ) -> Self {
        let mut sorted_paths: Vec<&PathAnnotation> = paths.iter().collect();
        sorted_paths.sort_by_key(|p| p.path_id);
        let path_ids: Vec<PathId> = sorted_paths.iter().map(|p| p.path_id).collect();

        let mut kept = Vec::new();
        let mut pruned = Vec::new();
        let mut feasible = Vec::new();
        for d in detections {
            let labels: Vec<usize> = sorted_paths
                .iter()
                .enumerate()
                .filter(|(_, p)| unary_cost(d, p).is_finite())
                .map(|(k, _)| k)
                .collect();
            if labels.is_empty() {
                pruned.push(d.id);
            } else {
                kept.push(d);
                feasible.push(labels);
            }
        }

        let index: BTreeMap<DetectionId, usize> = kept.iter().enumerate().map(|(i, d)| (d.id, i)).collect();
        let mut edges = Vec::new();
        let mut adjacency = vec![Vec::new(); kept.len()];
        for (a, b, value) in graph.edges() {
            if let (Some(&i), Some(&j)) = (index.get(&a), index.get(&b)) {
                let w = separation_cost(value, config);
                edges.push((i, j, w));
                adjacency[i].push((j, w));
                adjacency[j].push((i, w));
            }
        }
        Self {
            kept,
            pruned,
            path_ids,
            feasible,
            edges,
            adjacency,
        }
    }

    fn energy(&self, labels: &[usize]) -> f64 {
        // an empty float sum is -0.0; report a plain zero
        0.0 + self
            .edges
            .iter()
            .filter(|(i, j, _)| labels[*i] != labels[*j])
            .map(|e| e.2)
            .sum::<f64>()
    }

    /// Stand-in for an infinite unary: exceeds any finite energy.
    fn infinity(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum::<f64>() + 1.0
    }

    fn assignment(&self, labels: &[usize], energy: f64, trace: Vec<f64>) -> LabelAssignment {
        LabelAssignment {
            labels: self
                .kept
                .iter()
                .zip(labels)
                .map(|(d, &l)| (d.id, self.path_ids[l]))
                .collect(),
            pruned: self.pruned.iter().copied().collect(),
            energy,
            energy_trace: trace,
            refined_components: 0,
        }
    }
}

/// Nearest-sample initialization: the feasible path whose sample is closest
/// to the box center; ties go to the smaller path id.
fn initial_labels(problem: &Problem, paths: &[PathAnnotation]) -> Vec<usize> {
    let by_id: BTreeMap<PathId, &PathAnnotation> = paths.iter().map(|p| (p.path_id, p)).collect();
    problem
        .kept
        .iter()
        .zip(&problem.feasible)
        .map(|(d, labels)| {
            let center = d.bbox.center();
            let mut best = labels[0];
            let mut best_dist = f64::INFINITY;
            for &l in labels {
                let sample = by_id[&problem.path_ids[l]]
                    .sample(d.frame)
                    .expect("feasible label has a sample");
                let dist = sample.distance_sq(&center);
                if dist < best_dist {
                    best = l;
                    best_dist = dist;
                }
            }
            best
        })
        .collect()
}

/// A connected group of free (multi-label) detections with unary costs that
/// absorb the pairwise terms to fixed neighbours.
struct Component {
    nodes: Vec<usize>,
    labels: Vec<usize>,
    /// `unary[k][l]` for node `nodes[k]` and label `l`, `None` if infeasible.
    unary: Vec<Vec<Option<f64>>>,
    /// Edges between local node indices.
    edges: Vec<(usize, usize, f64)>,
}

impl Component {
    fn energy(&self, labels: &[usize]) -> f64 {
        let unary: f64 = labels
            .iter()
            .enumerate()
            .map(|(k, &l)| self.unary[k][l].unwrap_or(f64::INFINITY))
            .sum();
        let pairwise: f64 = self
            .edges
            .iter()
            .filter(|(i, j, _)| labels[*i] != labels[*j])
            .map(|e| e.2)
            .sum();
        unary + pairwise
    }

    /// Solves a binary move exactly: node `k` takes `choice(k).0` or, if
    /// given, `choice(k).1`. Every pair of choices must make the pairwise
    /// terms submodular, which holds for expansion and swap moves under
    /// the Potts model.
    fn binary_move(&self, choice: impl Fn(usize) -> (usize, Option<usize>), infinity: f64) -> Vec<usize> {
        let n = self.nodes.len();
        let (s, t) = (n, n + 1);
        let mut net = FlowNetwork::new(n + 2);
        let options: Vec<(usize, Option<usize>)> = (0..n).map(&choice).collect();
        let cost0: Vec<f64> = options
            .iter()
            .enumerate()
            .map(|(k, &(l0, _))| self.unary[k][l0].expect("first choice is feasible"))
            .collect();
        let mut cost1: Vec<f64> = options
            .iter()
            .enumerate()
            .map(|(k, &(_, l1))| l1.and_then(|l| self.unary[k][l]).unwrap_or(infinity))
            .collect();
        let label1 = |k: usize| options[k].1.unwrap_or(options[k].0);
        for &(i, j, w) in &self.edges {
            let differ = |a: usize, b: usize| if a != b { w } else { 0.0 };
            let a = differ(options[i].0, options[j].0);
            let b = differ(options[i].0, label1(j));
            let c = differ(label1(i), options[j].0);
            let d = differ(label1(i), label1(j));
            // E = A + (C-A) x_i + (D-C) x_j + (B+C-A-D)(1-x_i) x_j, constant A dropped
            cost1[i] += c - a;
            cost1[j] += d - c;
            let pair = b + c - a - d;
            debug_assert!(pair > -1e-9, "non-submodular move");
            if pair > 0.0 {
                net.add_edge(i, j, pair, 0.0);
            }
        }
        for k in 0..n {
            let diff = cost1[k] - cost0[k];
            if diff > 0.0 {
                net.add_edge(s, k, diff, 0.0);
            } else if diff < 0.0 {
                net.add_edge(k, t, -diff, 0.0);
            }
        }
        net.max_flow(s, t);
        let source = net.source_side(s);
        (0..n)
            .map(|k| if source[k] { options[k].0 } else { label1(k) })
            .collect()
    }

    fn feasible(&self, k: usize, l: usize) -> bool {
        self.unary[k][l].is_some()
    }

    /// Alternates expansion and swap moves from `start` until neither
    /// lowers the energy. Returns the labels and the energy after each
    /// accepted move, starting with the energy of `start`.
    fn local_search(&self, start: Vec<usize>, sweeps: u32, infinity: f64) -> (Vec<usize>, Vec<f64>) {
        let mut current = start;
        let mut trace = vec![self.energy(&current)];
        let accept = |proposal: Vec<usize>, current: &mut Vec<usize>, trace: &mut Vec<f64>| {
            let e = self.energy(&proposal);
            if e < trace[trace.len() - 1] - MOVE_TOLERANCE {
                *current = proposal;
                trace.push(e);
                true
            } else {
                false
            }
        };
        for _ in 0..sweeps {
            let mut improved = false;
            for &alpha in &self.labels {
                let proposal = self.binary_move(
                    |k| {
                        (
                            current[k],
                            (current[k] != alpha && self.feasible(k, alpha)).then_some(alpha),
                        )
                    },
                    infinity,
                );
                improved |= accept(proposal, &mut current, &mut trace);
            }
            for (x, &alpha) in self.labels.iter().enumerate() {
                for &beta in &self.labels[x + 1..] {
                    let proposal = self.binary_move(
                        |k| {
                            let l = current[k];
                            if (l == alpha || l == beta) && self.feasible(k, alpha) && self.feasible(k, beta) {
                                (alpha, Some(beta))
                            } else {
                                (l, None)
                            }
                        },
                        infinity,
                    );
                    improved |= accept(proposal, &mut current, &mut trace);
                }
            }
            if !improved {
                break;
            }
        }
        (current, trace)
    }
}

/// Search-node limit for the exact refinement of a multi-label component.
pub const EXACT_SEARCH_BUDGET: usize = 200_000;
/// Components with more free detections than this keep the move result.
pub const EXACT_SEARCH_MAX_NODES: usize = 32;

struct ExactSearch<'c> {
    comp: &'c Component,
    order: Vec<usize>,
    neighbours: Vec<Vec<(usize, f64)>>,
    labels: Vec<Option<usize>>,
    best: Vec<usize>,
    best_energy: f64,
    visited: usize,
    improved: bool,
}

impl ExactSearch<'_> {
    /// Cost of giving `k` label `l` against the already assigned neighbours.
    fn cost_against_assigned(&self, k: usize, l: usize) -> Option<f64> {
        let unary = self.comp.unary[k][l]?;
        Some(
            unary
                + self.neighbours[k]
                    .iter()
                    .filter(|(j, _)| self.labels[*j].is_some_and(|lj| lj != l))
                    .map(|(_, w)| w)
                    .sum::<f64>(),
        )
    }

    fn bound(&self, depth: usize) -> f64 {
        self.order[depth..]
            .iter()
            .map(|&k| {
                self.comp
                    .labels
                    .iter()
                    .filter_map(|&l| self.cost_against_assigned(k, l))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    }

    fn descend(&mut self, depth: usize, partial: f64) {
        if self.visited >= EXACT_SEARCH_BUDGET {
            return;
        }
        self.visited += 1;
        if depth == self.order.len() {
            if partial < self.best_energy - MOVE_TOLERANCE {
                self.best_energy = partial;
                self.best = self.labels.iter().map(|l| l.expect("all assigned")).collect();
                self.improved = true;
            }
            return;
        }
        if partial + self.bound(depth) >= self.best_energy - MOVE_TOLERANCE {
            return;
        }
        let k = self.order[depth];
        for idx in 0..self.comp.labels.len() {
            let l = self.comp.labels[idx];
            let Some(cost) = self.cost_against_assigned(k, l) else {
                continue;
            };
            self.labels[k] = Some(l);
            self.descend(depth + 1, partial + cost);
            self.labels[k] = None;
        }
    }
}

impl Component {
    /// Branch and bound over the component's labelings, seeded with a known
    /// labeling as the incumbent. Returns a strictly better labeling if one
    /// is found within [`EXACT_SEARCH_BUDGET`] search nodes.
    fn refine_exact(&self, incumbent: &[usize]) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let mut neighbours = vec![Vec::new(); n];
        for &(i, j, w) in &self.edges {
            neighbours[i].push((j, w));
            neighbours[j].push((i, w));
        }
        // breadth-first from the best-connected node keeps assigned sets
        // adjacent, which tightens the bound early
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        let weight = |k: usize| neighbours[k].iter().map(|e| e.1).sum::<f64>();
        let root = (0..n)
            .max_by(|&a, &b| weight(a).total_cmp(&weight(b)).then(b.cmp(&a)))
            .unwrap_or(0);
        for start in std::iter::once(root).chain(0..n) {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut cursor = order.len();
            order.push(start);
            while cursor < order.len() {
                let u = order[cursor];
                cursor += 1;
                let mut next: Vec<&(usize, f64)> = neighbours[u].iter().filter(|(v, _)| !seen[*v]).collect();
                next.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                for &(v, _) in next {
                    if !seen[v] {
                        seen[v] = true;
                        order.push(v);
                    }
                }
            }
        }
        let mut search = ExactSearch {
            comp: self,
            order,
            neighbours,
            labels: vec![None; n],
            best: incumbent.to_vec(),
            best_energy: self.energy(incumbent),
            visited: 0,
            improved: false,
        };
        search.descend(0, 0.0);
        search.improved.then_some(search.best)
    }
}

fn build_components(problem: &Problem, init: &[usize]) -> (Vec<Component>, Vec<bool>) {
    let n = problem.kept.len();
    let free: Vec<bool> = problem.feasible.iter().map(|f| f.len() > 1).collect();
    let mut comp_of = vec![usize::MAX; n];
    let mut components = Vec::new();
    for start in 0..n {
        if !free[start] || comp_of[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut nodes = vec![start];
        comp_of[start] = id;
        let mut cursor = 0;
        while cursor < nodes.len() {
            let u = nodes[cursor];
            cursor += 1;
            for &(v, _) in &problem.adjacency[u] {
                if free[v] && comp_of[v] == usize::MAX {
                    comp_of[v] = id;
                    nodes.push(v);
                }
            }
        }
        nodes.sort_unstable();
        components.push(nodes);
    }

    let n_labels = problem.path_ids.len();
    let built = components
        .into_iter()
        .enumerate()
        .map(|(id, nodes)| {
            let local: BTreeMap<usize, usize> = nodes.iter().enumerate().map(|(k, &i)| (i, k)).collect();
            let mut labels = BTreeSet::new();
            let mut unary = Vec::with_capacity(nodes.len());
            for &i in &nodes {
                let mut row = vec![None; n_labels];
                for &l in &problem.feasible[i] {
                    labels.insert(l);
                    let fixed_cost: f64 = problem.adjacency[i]
                        .iter()
                        .filter(|(j, _)| !free[*j] && init[*j] != l)
                        .map(|(_, w)| w)
                        .sum();
                    row[l] = Some(fixed_cost);
                }
                unary.push(row);
            }
            let edges = problem
                .edges
                .iter()
                .filter(|(i, j, _)| comp_of[*i] == id && comp_of[*j] == id)
                .map(|&(i, j, w)| (local[&i], local[&j], w))
                .collect();
            Component {
                nodes,
                labels: labels.into_iter().collect(),
                unary,
                edges,
            }
        })
        .collect();
    (built, free)
}

/// Minimizes the labeling energy with graph cuts.
///
/// Detections without any feasible path are returned in `pruned`.
pub fn solve_prelabel(
    detections: &[Detection],
    paths: &[PathAnnotation],
    graph: &AffinityGraph,
    config: &EngineConfig,
) -> LabelAssignment {
    let problem = Problem::new(detections, paths, graph, config);
    let mut labels = initial_labels(&problem, paths);
    let infinity = problem.infinity();
    let mut energy = problem.energy(&labels);
    let mut trace = vec![energy];

    let (components, _) = build_components(&problem, &labels);
    let mut refined = 0;
    for comp in &components {
        let current: Vec<usize> = comp.nodes.iter().map(|&i| labels[i]).collect();
        let comp_energy = comp.energy(&current);

        let best = if comp.labels.len() == 2 {
            let (a, b) = (comp.labels[0], comp.labels[1]);
            let cut = comp.binary_move(
                |k| {
                    if comp.feasible(k, a) {
                        (a, comp.feasible(k, b).then_some(b))
                    } else {
                        (b, None)
                    }
                },
                infinity,
            );
            let e = comp.energy(&cut);
            if e < comp_energy - MOVE_TOLERANCE {
                trace.push(energy - (comp_energy - e));
                cut
            } else {
                current
            }
        } else {
            // local search from the nearest-sample labels, then from each
            // label flooded over the component; the first lowest result wins
            let (mut best, steps) = comp.local_search(current, config.max_label_sweeps, infinity);
            let base = energy - comp_energy;
            trace.extend(steps[1..].iter().map(|e| base + e));
            let mut best_energy = steps[steps.len() - 1];
            for &alpha in &comp.labels {
                let flooded: Vec<usize> = (0..comp.nodes.len())
                    .map(|k| {
                        if comp.feasible(k, alpha) {
                            alpha
                        } else {
                            *comp
                                .labels
                                .iter()
                                .find(|&&l| comp.feasible(k, l))
                                .expect("free node has labels")
                        }
                    })
                    .collect();
                let (labels, steps) = comp.local_search(flooded, config.max_label_sweeps, infinity);
                let e = steps[steps.len() - 1];
                if e < best_energy - MOVE_TOLERANCE {
                    best = labels;
                    best_energy = e;
                    trace.push(base + e);
                }
            }
            let exact = (comp.nodes.len() <= EXACT_SEARCH_MAX_NODES)
                .then(|| comp.refine_exact(&best))
                .flatten();
            if let Some(exact) = exact {
                refined += 1;
                best_energy = comp.energy(&exact);
                trace.push(base + best_energy);
                best = exact;
            }
            best
        };
        energy -= comp_energy - comp.energy(&best);
        for (k, &i) in comp.nodes.iter().enumerate() {
            labels[i] = best[k];
        }
    }

    // re-evaluate from scratch so the reported energy carries no drift
    let energy = problem.energy(&labels);
    let mut assignment = problem.assignment(&labels, energy, trace);
    assignment.refined_components = refined;
    assignment
}

/// Exhaustive minimum of the same energy, for small instances.
///
/// Ties resolve to the lexicographically first labeling when detections are
/// taken in input order and labels in ascending path id.
pub fn brute_force_prelabel(
    detections: &[Detection],
    paths: &[PathAnnotation],
    graph: &AffinityGraph,
    config: &EngineConfig,
) -> Result<LabelAssignment> {
    if paths.len() > BRUTE_FORCE_MAX_PATHS {
        return Err(Error::InstanceTooLarge(format!(
            "{} paths, limit {BRUTE_FORCE_MAX_PATHS}",
            paths.len()
        )));
    }
    let mut sorted_paths: Vec<&PathAnnotation> = paths.iter().collect();
    sorted_paths.sort_by_key(|p| p.path_id);

    let mut kept: Vec<(&Detection, Vec<PathId>)> = Vec::new();
    let mut pruned = BTreeSet::new();
    for d in detections {
        let feasible: Vec<PathId> = sorted_paths
            .iter()
            .filter(|p| unary_cost(d, p) == 0.0)
            .map(|p| p.path_id)
            .collect();
        if feasible.is_empty() {
            pruned.insert(d.id);
        } else {
            kept.push((d, feasible));
        }
    }
    if kept.len() > BRUTE_FORCE_MAX_DETECTIONS {
        return Err(Error::InstanceTooLarge(format!(
            "{} detections, limit {BRUTE_FORCE_MAX_DETECTIONS}",
            kept.len()
        )));
    }

    // for each detection, the pairwise terms to detections earlier in the order
    let position: BTreeMap<DetectionId, usize> = kept.iter().enumerate().map(|(k, (d, _))| (d.id, k)).collect();
    let mut earlier: Vec<Vec<(usize, f64)>> = vec![Vec::new(); kept.len()];
    for (a, b, value) in graph.edges() {
        if let (Some(&i), Some(&j)) = (position.get(&a), position.get(&b)) {
            let (lo, hi) = (i.min(j), i.max(j));
            earlier[hi].push((lo, separation_cost(value, config)));
        }
    }

    struct Search<'s> {
        feasible: Vec<&'s [PathId]>,
        earlier: &'s [Vec<(usize, f64)>],
        current: Vec<PathId>,
        best: Option<(f64, Vec<PathId>)>,
    }

    impl Search<'_> {
        fn run(&mut self, k: usize, partial: f64) {
            if let Some((best, _)) = &self.best {
                if partial > *best {
                    return;
                }
            }
            if k == self.feasible.len() {
                let better = self.best.as_ref().is_none_or(|(best, _)| partial < *best);
                if better {
                    self.best = Some((partial, self.current.clone()));
                }
                return;
            }
            for &label in self.feasible[k] {
                let added: f64 = self.earlier[k]
                    .iter()
                    .filter(|(j, _)| self.current[*j] != label)
                    .map(|(_, w)| w)
                    .sum();
                self.current.push(label);
                self.run(k + 1, partial + added);
                self.current.pop();
            }
        }
    }

    let mut search = Search {
        feasible: kept.iter().map(|(_, f)| f.as_slice()).collect(),
        earlier: &earlier,
        current: Vec::with_capacity(kept.len()),
        best: None,
    };
    search.run(0, 0.0);
    let (energy, best) = search.best.unwrap_or((0.0, Vec::new()));
    Ok(LabelAssignment {
        labels: kept.iter().zip(best).map(|((d, _), l)| (d.id, l)).collect(),
        pruned,
        energy,
        energy_trace: vec![energy],
        refined_components: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BBox, Point};
    use crate::testkit::random_prelabel_instance;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn det(id: u64, frame: u32, x: f64) -> Detection {
        Detection::new(DetectionId(id), frame, BBox::new(x, 0.0, 10.0, 10.0).unwrap(), 0.9).unwrap()
    }

    fn path(id: u64, first: u32, pts: &[(f64, f64)]) -> PathAnnotation {
        PathAnnotation::new(PathId(id), first, pts.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn unary_examples() {
        let d = det(0, 1, 0.0);
        let p = path(0, 0, &[(50.0, 50.0), (5.0, 5.0), (50.0, 50.0)]);
        assert_eq!(unary_cost(&d, &p), 0.0);
        assert_eq!(unary_cost(&det(1, 0, 0.0), &p), f64::INFINITY);
        assert_eq!(unary_cost(&det(2, 9, 0.0), &p), f64::INFINITY);
    }

    #[test]
    fn separation_examples() {
        let c = EngineConfig::default();
        assert_eq!(separation_cost(0.0, &c), 0.0);
        assert_abs_diff_eq!(separation_cost(1.0 - (-3.0f64).exp(), &c), 3.0, epsilon = 1e-4);
        assert_abs_diff_eq!(separation_cost(1.0, &c), -(c.affinity_floor.ln()), epsilon = 1e-12);
        let no_floor = EngineConfig {
            affinity_floor: 0.0,
            ..EngineConfig::default()
        };
        assert_eq!(separation_cost(1.0, &no_floor), no_floor.separation_cap);
        let mut prev = 0.0;
        for k in 0..=100 {
            let v = separation_cost(k as f64 / 100.0, &c);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn prune_examples() {
        let p0 = path(0, 0, &[(5.0, 5.0)]);
        let p1 = path(1, 0, &[(8.0, 5.0)]);
        let dets = vec![det(0, 0, 0.0), det(1, 0, 100.0)];
        let (kept, pruned) = prune(&dets, &[p0.clone(), p1.clone()]);
        assert_eq!(kept.len(), 1);
        assert_eq!(pruned[0].id, DetectionId(1));

        let config = EngineConfig::default();
        let graph = AffinityGraph::empty(40);
        let a = solve_prelabel(&dets, &[p0, p1], &graph, &config);
        assert_eq!(a.pruned, BTreeSet::from([DetectionId(1)]));
        // both paths fall inside det 0: the optimization decides, nearest wins
        assert_eq!(a.labels[&DetectionId(0)], PathId(0));
    }

    #[test]
    fn single_detection() {
        let config = EngineConfig::default();
        let a = solve_prelabel(
            &[det(0, 0, 0.0)],
            &[path(3, 0, &[(1.0, 1.0)])],
            &AffinityGraph::empty(40),
            &config,
        );
        assert_eq!(a.labels[&DetectionId(0)], PathId(3));
        assert_eq!(a.energy, 0.0);
    }

    #[test]
    fn affine_pair_stays_together() {
        // both detections feasible for A and B, A nearer both centers
        let config = EngineConfig::default();
        let dets = vec![det(0, 0, 0.0), det(1, 1, 0.0)];
        let a = path(0, 0, &[(5.0, 5.0), (5.0, 5.0)]);
        let b = path(1, 0, &[(9.0, 9.0), (9.0, 9.0)]);
        let graph = AffinityGraph::from_edges(&dets, 40, [(DetectionId(0), DetectionId(1), 0.9)]).unwrap();
        let out = solve_prelabel(&dets, &[a.clone(), b.clone()], &graph, &config);
        assert_eq!(out.labels[&DetectionId(0)], PathId(0));
        assert_eq!(out.labels[&DetectionId(1)], PathId(0));
        assert_eq!(out.energy, 0.0);
        let oracle = brute_force_prelabel(&dets, &[a, b], &graph, &config).unwrap();
        assert_eq!(oracle.energy, 0.0);
        assert_abs_diff_eq!(separation_cost(0.9, &config), 2.302575, epsilon = 1e-5);
    }

    #[test]
    fn affinity_overrides_nearest_initialization() {
        // det 1 is nearest B but tied to det 0, which only A can explain
        let config = EngineConfig::default();
        let dets = vec![det(0, 0, 0.0), det(1, 1, 0.0)];
        let a = path(0, 0, &[(5.0, 5.0), (1.0, 1.0)]);
        let b = path(1, 0, &[(50.0, 50.0), (5.0, 5.0)]);
        let graph = AffinityGraph::from_edges(&dets, 40, [(DetectionId(0), DetectionId(1), 0.8)]).unwrap();
        let out = solve_prelabel(&dets, &[a, b], &graph, &config);
        assert_eq!(out.labels[&DetectionId(1)], PathId(0));
        assert_eq!(out.energy, 0.0);
        assert!(out.energy_trace.len() >= 2);
    }

    #[test]
    fn brute_force_edge_cases() {
        let config = EngineConfig::default();
        let graph = AffinityGraph::empty(40);
        let empty = brute_force_prelabel(&[], &[path(0, 0, &[(0.0, 0.0)])], &graph, &config).unwrap();
        assert!(empty.labels.is_empty());
        assert_eq!(empty.energy, 0.0);

        let both = [path(4, 0, &[(5.0, 5.0)]), path(2, 0, &[(6.0, 6.0)])];
        let one = brute_force_prelabel(&[det(0, 0, 0.0)], &both, &graph, &config).unwrap();
        assert_eq!(one.labels[&DetectionId(0)], PathId(2));

        let many: Vec<PathAnnotation> = (0..4).map(|k| path(k, 0, &[(1.0, 1.0)])).collect();
        assert!(matches!(
            brute_force_prelabel(&[det(0, 0, 0.0)], &many, &graph, &config),
            Err(Error::InstanceTooLarge(_))
        ));
        let dets: Vec<Detection> = (0..15).map(|k| det(k, 0, 0.0)).collect();
        assert!(brute_force_prelabel(&dets, &both, &graph, &config).is_err());
    }

    #[test]
    fn chain_of_eight_two_paths_matches_oracle() {
        let config = EngineConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let inst = random_prelabel_instance(&mut rng, 8, 2, &config);
            let got = solve_prelabel(&inst.detections, &inst.paths, &inst.graph, &config);
            let want = brute_force_prelabel(&inst.detections, &inst.paths, &inst.graph, &config).unwrap();
            assert_abs_diff_eq!(got.energy, want.energy, epsilon = 1e-9);
        }
    }

    #[test]
    fn invariants_on_random_instances() {
        let config = EngineConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..60 {
            let inst = random_prelabel_instance(&mut rng, 12, 3, &config);
            let got = solve_prelabel(&inst.detections, &inst.paths, &inst.graph, &config);
            // feasibility and partition
            let path_by_id: BTreeMap<_, _> = inst.paths.iter().map(|p| (p.path_id, p)).collect();
            for d in &inst.detections {
                match got.labels.get(&d.id) {
                    Some(l) => {
                        assert_eq!(unary_cost(d, path_by_id[l]), 0.0);
                        assert!(!got.pruned.contains(&d.id));
                    }
                    None => assert!(got.pruned.contains(&d.id)),
                }
            }
            // monotone trace
            for w in got.energy_trace.windows(2) {
                assert!(w[1] < w[0]);
            }
            let recomputed = labeling_energy(&inst.detections, &inst.paths, &inst.graph, &got.labels, &config);
            assert_abs_diff_eq!(recomputed, got.energy, epsilon = 1e-9);
            assert_abs_diff_eq!(*got.energy_trace.last().unwrap(), got.energy, epsilon = 1e-9);
        }
    }
}
