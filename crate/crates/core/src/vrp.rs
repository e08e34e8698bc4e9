//! Open-route, min-makespan coverage routing over the shortest-path metric.
//!
//! Construction is a balanced cheapest insertion, each route is then
//! re-sequenced by nearest neighbour, and a first-improvement local search
//! (intra-route 2-opt, inter-route relocate and swap) runs until no move
//! improves `(makespan, total length)` lexicographically or the time limit
//! expires.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::env_graph::{DistanceOracle, EnvGraph};
use crate::error::{invalid, Result};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VrpSolution {
    pub starts: Vec<usize>,
    /// Per-robot visiting order over the metric closure; `routes[r][0]` is
    /// the robot's start.
    pub routes: Vec<Vec<usize>>,
    pub lengths: Vec<f64>,
    pub makespan: f64,
    pub seed: u64,
}

/// A route expanded onto the environment graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Walk {
    pub robot: usize,
    pub vertices: Vec<usize>,
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct VrpOptions {
    pub time_limit: Duration,
    pub seed: u64,
}

impl Default for VrpOptions {
    fn default() -> Self {
        Self {
            time_limit: Duration::from_secs(20),
            seed: 0,
        }
    }
}

pub fn route_length(oracle: &DistanceOracle, route: &[usize]) -> f64 {
    route.windows(2).map(|w| oracle.dist(w[0], w[1])).sum()
}

/// Nearest-neighbour ordering of `vertices` starting from `start`; ties go
/// to the lowest vertex id.
pub fn nearest_neighbor_route(oracle: &DistanceOracle, start: usize, vertices: &[usize]) -> Vec<usize> {
    let mut left: Vec<usize> = vertices.iter().copied().filter(|&v| v != start).collect();
    left.sort_unstable();
    left.dedup();
    let mut route = vec![start];
    let mut cur = start;
    while !left.is_empty() {
        let (k, _) = left
            .iter()
            .enumerate()
            .min_by(|(_, &a), (_, &b)| oracle.dist(cur, a).total_cmp(&oracle.dist(cur, b)).then(a.cmp(&b)))
            .expect("non-empty");
        cur = left.remove(k);
        route.push(cur);
    }
    route
}

struct Routes<'a> {
    oracle: &'a DistanceOracle,
    routes: Vec<Vec<usize>>,
    lengths: Vec<f64>,
}

impl<'a> Routes<'a> {
    fn d(&self, u: usize, v: usize) -> f64 {
        self.oracle.dist(u, v)
    }

    fn refresh(&mut self, r: usize) {
        self.lengths[r] = route_length(self.oracle, &self.routes[r]);
    }

    fn makespan(&self) -> f64 {
        self.lengths.iter().copied().fold(0.0, f64::max)
    }

    fn total(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// Makespan and total if routes `a` and `b` took the given new lengths.
    fn score_with(&self, changes: &[(usize, f64)]) -> (f64, f64) {
        let mut makespan: f64 = 0.0;
        let mut total = 0.0;
        for (r, &len) in self.lengths.iter().enumerate() {
            let len = changes.iter().find(|c| c.0 == r).map_or(len, |c| c.1);
            makespan = makespan.max(len);
            total += len;
        }
        (makespan, total)
    }

    fn improves(&self, candidate: (f64, f64)) -> bool {
        let (ms, total) = (self.makespan(), self.total());
        candidate.0 < ms - EPS || (candidate.0 <= ms && candidate.1 < total - EPS)
    }

    /// Cost of removing position `i` (>= 1) from route `r`.
    fn removal_delta(&self, r: usize, i: usize) -> f64 {
        let route = &self.routes[r];
        let x = route[i];
        let prev = route[i - 1];
        match route.get(i + 1) {
            Some(&next) => self.d(prev, next) - self.d(prev, x) - self.d(x, next),
            None => -self.d(prev, x),
        }
    }

    /// Cost of inserting `x` before position `p` (1..=len) of route `r`.
    fn insertion_delta(&self, r: usize, p: usize, x: usize) -> f64 {
        let route = &self.routes[r];
        let prev = route[p - 1];
        match route.get(p) {
            Some(&next) => self.d(prev, x) + self.d(x, next) - self.d(prev, next),
            None => self.d(prev, x),
        }
    }

    /// Cost of replacing position `i` (>= 1) of route `r` by `y`.
    fn replace_delta(&self, r: usize, i: usize, y: usize) -> f64 {
        let route = &self.routes[r];
        let x = route[i];
        let prev = route[i - 1];
        let mut delta = self.d(prev, y) - self.d(prev, x);
        if let Some(&next) = route.get(i + 1) {
            delta += self.d(y, next) - self.d(x, next);
        }
        delta
    }

    fn try_two_opt(&mut self) -> bool {
        for r in 0..self.routes.len() {
            let m = self.routes[r].len() - 1;
            for i in 1..m {
                for j in (i + 1)..=m {
                    let route = &self.routes[r];
                    let mut delta = self.d(route[i - 1], route[j]) - self.d(route[i - 1], route[i]);
                    if j < m {
                        delta += self.d(route[i], route[j + 1]) - self.d(route[j], route[j + 1]);
                    }
                    let score = self.score_with(&[(r, self.lengths[r] + delta)]);
                    if self.improves(score) {
                        self.routes[r][i..=j].reverse();
                        self.refresh(r);
                        return true;
                    }
                }
            }
        }
        false
    }

    fn try_relocate(&mut self) -> bool {
        let n = self.routes.len();
        for a in 0..n {
            for i in 1..self.routes[a].len() {
                let x = self.routes[a][i];
                let removed = self.lengths[a] + self.removal_delta(a, i);
                for b in (0..n).filter(|&b| b != a) {
                    for p in 1..=self.routes[b].len() {
                        let inserted = self.lengths[b] + self.insertion_delta(b, p, x);
                        let score = self.score_with(&[(a, removed), (b, inserted)]);
                        if self.improves(score) {
                            self.routes[a].remove(i);
                            self.routes[b].insert(p, x);
                            self.refresh(a);
                            self.refresh(b);
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    fn try_swap(&mut self) -> bool {
        let n = self.routes.len();
        for a in 0..n {
            for b in (a + 1)..n {
                for i in 1..self.routes[a].len() {
                    for j in 1..self.routes[b].len() {
                        let (x, y) = (self.routes[a][i], self.routes[b][j]);
                        let la = self.lengths[a] + self.replace_delta(a, i, y);
                        let lb = self.lengths[b] + self.replace_delta(b, j, x);
                        let score = self.score_with(&[(a, la), (b, lb)]);
                        if self.improves(score) {
                            self.routes[a][i] = y;
                            self.routes[b][j] = x;
                            self.refresh(a);
                            self.refresh(b);
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Heuristic min-makespan open VRP covering every vertex of `env`.
pub fn solve_vrp(env: &EnvGraph, oracle: &DistanceOracle, starts: &[usize], opts: &VrpOptions) -> Result<VrpSolution> {
    if starts.is_empty() {
        return Err(invalid("at least one robot is required"));
    }
    if let Some(&s) = starts.iter().find(|&&s| s >= env.len()) {
        return Err(invalid(format!("start vertex {s} is not in the environment")));
    }
    let began = Instant::now();
    let n = env.len();
    let mut covered = vec![false; n];
    for &s in starts {
        covered[s] = true;
    }

    // Balanced cheapest insertion.
    let mut state = Routes {
        oracle,
        routes: starts.iter().map(|&s| vec![s]).collect(),
        lengths: vec![0.0; starts.len()],
    };
    let mut unassigned: Vec<usize> = (0..n).filter(|&v| !covered[v]).collect();
    while !unassigned.is_empty() {
        let mut best: Option<(f64, f64, usize, usize, usize)> = None;
        for (k, &v) in unassigned.iter().enumerate() {
            for r in 0..state.routes.len() {
                for p in 1..=state.routes[r].len() {
                    let delta = state.insertion_delta(r, p, v);
                    let cand = (state.lengths[r] + delta, delta, k, r, p);
                    let better = match &best {
                        None => true,
                        Some(b) => cand.0.total_cmp(&b.0).then(cand.1.total_cmp(&b.1)).is_lt(),
                    };
                    if better {
                        best = Some(cand);
                    }
                }
            }
        }
        let (_, _, k, r, p) = best.expect("unassigned is non-empty");
        let v = unassigned.remove(k);
        state.routes[r].insert(p, v);
        state.refresh(r);
    }

    for r in 0..state.routes.len() {
        state.routes[r] = nearest_neighbor_route(oracle, starts[r], &state.routes[r]);
        state.refresh(r);
    }

    while began.elapsed() < opts.time_limit {
        if !(state.try_two_opt() || state.try_relocate() || state.try_swap()) {
            break;
        }
    }

    let makespan = state.makespan();
    Ok(VrpSolution {
        starts: starts.to_vec(),
        routes: state.routes,
        lengths: state.lengths,
        makespan,
        seed: opts.seed,
    })
}

/// Replaces every metric-closure hop by its shortest path in the graph.
pub fn expand_to_walk(oracle: &DistanceOracle, robot: usize, route: &[usize]) -> Walk {
    let mut vertices = Vec::with_capacity(route.len());
    let mut length = 0.0;
    if let Some(&first) = route.first() {
        vertices.push(first);
    }
    for hop in route.windows(2) {
        let path = oracle.path(hop[0], hop[1]);
        vertices.extend_from_slice(&path[1..]);
        length += oracle.dist(hop[0], hop[1]);
    }
    Walk { robot, vertices, length }
}

impl Walk {
    /// Every consecutive pair is an edge of `env`.
    pub fn is_realizable(&self, env: &EnvGraph) -> bool {
        self.vertices.windows(2).all(|w| env.edge_length(w[0], w[1]).is_some())
    }

    /// Sum of traversed edge lengths.
    pub fn edge_length_sum(&self, env: &EnvGraph) -> f64 {
        self.vertices
            .windows(2)
            .map(|w| env.edge_length(w[0], w[1]).unwrap_or(f64::NAN))
            .sum()
    }
}

/// True when the walks jointly visit every vertex of `env`.
pub fn covers_all(env: &EnvGraph, walks: &[Walk]) -> bool {
    let mut seen = vec![false; env.len()];
    for w in walks {
        for &v in &w.vertices {
            seen[v] = true;
        }
    }
    seen.iter().all(|&s| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_graph::{generate_random_env, shortest_paths, Edge, GenParams, Vertex};

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> EnvGraph {
        let vertices = (0..n).map(|id| Vertex { id, x: 0.0, y: 0.0 }).collect();
        let edges = edges.iter().map(|&(u, v, w)| Edge { u, v, w }).collect();
        EnvGraph::new(0, 0.0, vertices, edges).unwrap()
    }

    #[test]
    fn path_graph_single_robot() {
        let g = graph(3, &[(0, 1, 2.0), (1, 2, 5.0)]);
        let d = shortest_paths(&g);
        let sol = solve_vrp(&g, &d, &[0], &VrpOptions::default()).unwrap();
        assert_eq!(sol.routes, vec![vec![0, 1, 2]]);
        assert_eq!(sol.makespan, 7.0);
    }

    #[test]
    fn star_splits_leaves() {
        // hub 0, leaves 1 (3 m) and 2 (4 m); enumerating both assignments:
        // one robot per leaf gives makespan 4, one robot for both gives 10.
        let g = graph(3, &[(0, 1, 3.0), (0, 2, 4.0)]);
        let d = shortest_paths(&g);
        let sol = solve_vrp(&g, &d, &[0, 0], &VrpOptions::default()).unwrap();
        assert_eq!(sol.makespan, 4.0);
        let mut leaves: Vec<usize> = sol.routes.iter().map(|r| r.len()).collect();
        leaves.sort();
        assert_eq!(leaves, vec![2, 2]);
    }

    #[test]
    fn three_robots_beat_single_nn_tour() {
        for seed in 0..3 {
            let g = generate_random_env(&GenParams {
                side: 60.0,
                vertex_removal_frac: 0.0,
                edge_removal_frac: 0.0,
                seed,
                ..GenParams::default()
            })
            .unwrap();
            assert_eq!(g.len(), 49);
            let d = shortest_paths(&g);
            let sol = solve_vrp(&g, &d, &[0, 0, 0], &VrpOptions::default()).unwrap();
            let mut covered = vec![false; g.len()];
            for r in &sol.routes {
                assert_eq!(r[0], 0);
                for &v in r {
                    covered[v] = true;
                }
            }
            assert!(covered.iter().all(|&c| c));
            let all: Vec<usize> = (0..g.len()).collect();
            let nn = route_length(&d, &nearest_neighbor_route(&d, 0, &all));
            assert!(sol.makespan <= nn + 1e-9, "{} > {}", sol.makespan, nn);
            for (r, len) in sol.routes.iter().zip(&sol.lengths) {
                assert!((route_length(&d, r) - len).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn empty_robot_set_is_rejected() {
        let g = graph(2, &[(0, 1, 1.0)]);
        let d = shortest_paths(&g);
        assert!(solve_vrp(&g, &d, &[], &VrpOptions::default()).is_err());
        assert!(solve_vrp(&g, &d, &[5], &VrpOptions::default()).is_err());
    }

    #[test]
    fn expansion_follows_shortest_paths() {
        let g = graph(3, &[(0, 1, 3.0), (1, 2, 4.0), (0, 2, 10.0)]);
        let d = shortest_paths(&g);
        let w = expand_to_walk(&d, 0, &[0, 2]);
        assert_eq!(w.vertices, vec![0, 1, 2]);
        assert_eq!(w.length, 7.0);
        let w = expand_to_walk(&d, 0, &[0]);
        assert_eq!(w.vertices, vec![0]);
        assert_eq!(w.length, 0.0);
    }

    #[test]
    fn walks_are_realizable_and_cover() {
        let g = generate_random_env(&GenParams::new(80.0, 4)).unwrap();
        let d = shortest_paths(&g);
        let sol = solve_vrp(&g, &d, &[3, 3, 3], &VrpOptions::default()).unwrap();
        let walks: Vec<Walk> = sol
            .routes
            .iter()
            .enumerate()
            .map(|(r, route)| expand_to_walk(&d, r, route))
            .collect();
        for w in &walks {
            assert!(w.is_realizable(&g));
            let rel = (w.edge_length_sum(&g) - w.length).abs() / w.length.max(1.0);
            assert!(rel < 1e-9);
        }
        assert!(covers_all(&g, &walks));
    }

    #[test]
    fn solve_is_deterministic() {
        let g = generate_random_env(&GenParams::new(60.0, 9)).unwrap();
        let d = shortest_paths(&g);
        let a = solve_vrp(&g, &d, &[0, 0, 0], &VrpOptions::default()).unwrap();
        let b = solve_vrp(&g, &d, &[0, 0, 0], &VrpOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
