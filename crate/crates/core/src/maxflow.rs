//! s-t max-flow / min-cut on real-valued capacities (Dinic's algorithm).
//!
//! Graph-cut energy minimization only needs the minimum cut, which is read
//! off the residual graph once the flow is maximal: nodes still reachable
//! from the source form the source side.

use std::collections::VecDeque;

/// Residual capacities at or below this are treated as saturated.
const EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    rev: usize,
    cap: f64,
}

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    adj: Vec<Vec<Edge>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl FlowNetwork {
    pub fn new(n: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n],
            level: vec![-1; n],
            iter: vec![0; n],
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    /// Adds a directed edge `u -> v`. A `reverse` capacity turns it into a
    /// pair of opposite edges sharing one residual slot.
    pub fn add_edge(&mut self, u: usize, v: usize, cap: f64, reverse: f64) {
        debug_assert!(cap >= 0.0 && reverse >= 0.0);
        let (ru, rv) = (self.adj[v].len(), self.adj[u].len());
        self.adj[u].push(Edge { to: v, rev: ru, cap });
        self.adj[v].push(Edge {
            to: u,
            rev: rv,
            cap: reverse,
        });
    }

    fn bfs(&mut self, s: usize) {
        self.level.iter_mut().for_each(|l| *l = -1);
        let mut queue = VecDeque::new();
        self.level[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for e in &self.adj[u] {
                if e.cap > EPS && self.level[e.to] < 0 {
                    self.level[e.to] = self.level[u] + 1;
                    queue.push_back(e.to);
                }
            }
        }
    }

    fn dfs(&mut self, u: usize, t: usize, limit: f64) -> f64 {
        if u == t {
            return limit;
        }
        while self.iter[u] < self.adj[u].len() {
            let i = self.iter[u];
            let (to, cap) = (self.adj[u][i].to, self.adj[u][i].cap);
            if cap > EPS && self.level[u] < self.level[to] {
                let pushed = self.dfs(to, t, limit.min(cap));
                if pushed > 0.0 {
                    let rev = self.adj[u][i].rev;
                    self.adj[u][i].cap -= pushed;
                    self.adj[to][rev].cap += pushed;
                    return pushed;
                }
            }
            self.iter[u] += 1;
        }
        0.0
    }

    /// Pushes the maximum flow from `s` to `t` and returns its value.
    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = 0.0;
        loop {
            self.bfs(s);
            if self.level[t] < 0 {
                return flow;
            }
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.dfs(s, t, f64::INFINITY);
                if f <= 0.0 {
                    break;
                }
                flow += f;
            }
        }
    }

    /// Source side of the minimum cut. Call after [`max_flow`](Self::max_flow).
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        let mut queue = VecDeque::from([s]);
        seen[s] = true;
        while let Some(u) = queue.pop_front() {
            for e in &self.adj[u] {
                if e.cap > EPS && !seen[e.to] {
                    seen[e.to] = true;
                    queue.push_back(e.to);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn textbook_network() {
        // CLRS figure 26.1, max flow 23
        let mut g = FlowNetwork::new(6);
        for (u, v, c) in [
            (0, 1, 16.0),
            (0, 2, 13.0),
            (1, 3, 12.0),
            (2, 1, 4.0),
            (2, 4, 14.0),
            (3, 2, 9.0),
            (3, 5, 20.0),
            (4, 3, 7.0),
            (4, 5, 4.0),
        ] {
            g.add_edge(u, v, c, 0.0);
        }
        assert!((g.max_flow(0, 5) - 23.0).abs() < 1e-12);
        let side = g.source_side(0);
        assert!(side[0] && !side[5]);
    }

    #[test]
    fn max_flow_equals_brute_force_min_cut() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(2..8usize);
            let (s, t) = (0, n - 1);
            let mut edges = Vec::new();
            let mut g = FlowNetwork::new(n);
            for u in 0..n {
                for v in 0..n {
                    if u != v && rng.random_bool(0.4) {
                        let c = rng.random_range(0.0..5.0);
                        g.add_edge(u, v, c, 0.0);
                        edges.push((u, v, c));
                    }
                }
            }
            let flow = g.max_flow(s, t);
            let mut best = f64::INFINITY;
            for mask in 0u32..(1 << n) {
                if mask & 1 == 0 || mask & (1 << t) != 0 {
                    continue;
                }
                let cut: f64 = edges
                    .iter()
                    .filter(|(u, v, _)| mask & (1 << u) != 0 && mask & (1 << v) == 0)
                    .map(|e| e.2)
                    .sum();
                best = best.min(cut);
            }
            assert!((flow - best).abs() < 1e-9, "{flow} vs {best}");
            let side = g.source_side(s);
            let cut: f64 = edges
                .iter()
                .filter(|(u, v, _)| side[*u] && !side[*v])
                .map(|e| e.2)
                .sum();
            assert!((cut - best).abs() < 1e-9);
        }
    }
}
