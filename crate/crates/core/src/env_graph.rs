//! Metric exploration graphs: random grid-like generation, validation, JSON
//! I/O and all-pairs shortest paths.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

/// Connected, undirected, metric graph of places to visit.
///
/// Vertex ids are contiguous `0..len()` and equal to their index in
/// `vertices`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEnvGraph")]
pub struct EnvGraph {
    pub seed: u64,
    pub side: f64,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    #[serde(skip)]
    adjacency: Vec<Vec<(usize, f64)>>,
}

#[derive(Deserialize)]
struct RawEnvGraph {
    seed: u64,
    side: f64,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
}

impl TryFrom<RawEnvGraph> for EnvGraph {
    type Error = Error;
    fn try_from(raw: RawEnvGraph) -> Result<Self> {
        EnvGraph::new(raw.seed, raw.side, raw.vertices, raw.edges)
    }
}

impl EnvGraph {
    /// Validates and indexes a graph. Vertices may be listed in any order
    /// but their ids must cover `0..n` exactly once.
    pub fn new(seed: u64, side: f64, mut vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self> {
        vertices.sort_by_key(|v| v.id);
        for (k, v) in vertices.iter().enumerate() {
            if v.id != k {
                return Err(Error::InvalidGraph(format!(
                    "vertex ids must be contiguous from 0; found {} at position {k}",
                    v.id
                )));
            }
            if !v.x.is_finite() || !v.y.is_finite() {
                return Err(Error::InvalidGraph(format!("vertex {k} has non-finite coordinates")));
            }
        }
        let n = vertices.len();
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no vertices".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        let mut seen = std::collections::HashSet::new();
        for e in &edges {
            if e.u >= n || e.v >= n {
                return Err(Error::InvalidGraph(format!("edge ({}, {}) out of range", e.u, e.v)));
            }
            if e.u == e.v {
                return Err(Error::InvalidGraph(format!("self-loop at {}", e.u)));
            }
            if !(e.w.is_finite() && e.w > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) has invalid length {}",
                    e.u, e.v, e.w
                )));
            }
            if !seen.insert((e.u.min(e.v), e.u.max(e.v))) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({}, {})", e.u, e.v)));
            }
            adjacency[e.u].push((e.v, e.w));
            adjacency[e.v].push((e.u, e.w));
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|&(v, _)| v);
        }
        let g = Self {
            seed,
            side,
            vertices,
            edges,
            adjacency,
        };
        if !g.is_connected() {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    pub fn edge_length(&self, u: usize, v: usize) -> Option<f64> {
        self.adjacency
            .get(u)?
            .iter()
            .find(|&&(w, _)| w == v)
            .map(|&(_, len)| len)
    }

    pub fn is_connected(&self) -> bool {
        let adj: Vec<Vec<usize>> = self
            .adjacency
            .iter()
            .map(|a| a.iter().map(|&(v, _)| v).collect())
            .collect();
        connected(&adj, &vec![true; adj.len()])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// BFS connectivity over the `alive` vertices.
fn connected(adj: &[Vec<usize>], alive: &[bool]) -> bool {
    let Some(start) = alive.iter().position(|&a| a) else {
        return false;
    };
    let total = alive.iter().filter(|&&a| a).count();
    let mut seen = vec![false; adj.len()];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if alive[v] && !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub side: f64,
    pub grid_step: f64,
    pub vertex_removal_frac: f64,
    pub edge_removal_frac: f64,
    pub coord_noise_sigma: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            side: 100.0,
            grid_step: 10.0,
            vertex_removal_frac: 0.10,
            edge_removal_frac: 0.03,
            coord_noise_sigma: 2.0,
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn new(side: f64, seed: u64) -> Self {
        Self {
            side,
            seed,
            ..Self::default()
        }
    }

    /// Grid vertices per side.
    pub fn cells_per_side(&self) -> usize {
        (self.side / self.grid_step).round() as usize + 1
    }
}

/// Random grid-like environment: a 4-adjacency grid with vertices and then
/// edges removed (never disconnecting), then Gaussian coordinate noise.
pub fn generate_random_env(params: &GenParams) -> Result<EnvGraph> {
    let step = params.grid_step;
    if !(step > 0.0) || params.side < 2.0 * step {
        return Err(Error::InvalidArgument(format!(
            "side {} must be at least twice the grid step {}",
            params.side, step
        )));
    }
    let ratio = params.side / step;
    if (ratio - ratio.round()).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "side {} is not a multiple of the grid step {}",
            params.side, step
        )));
    }
    for frac in [params.vertex_removal_frac, params.edge_removal_frac] {
        if !(0.0..1.0).contains(&frac) {
            return Err(Error::InvalidArgument(format!("removal fraction {frac} outside [0, 1)")));
        }
    }
    let k = params.cells_per_side();
    let total = k * k;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut grid_edges = Vec::new();
    for r in 0..k {
        for c in 0..k {
            let id = r * k + c;
            if c + 1 < k {
                grid_edges.push((id, id + 1));
            }
            if r + 1 < k {
                grid_edges.push((id, id + k));
            }
        }
    }

    // Vertex removal.
    let mut alive = vec![true; total];
    let mut edge_alive = vec![true; grid_edges.len()];
    let adjacency = |edge_alive: &[bool]| {
        let mut adj = vec![Vec::new(); total];
        for (e, &(u, v)) in grid_edges.iter().enumerate() {
            if edge_alive[e] {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        adj
    };
    let target_v = (params.vertex_removal_frac * total as f64).floor() as usize;
    let adj = adjacency(&edge_alive);
    remove_with_retries(target_v, &mut rng, "vertex", |rng| {
        let candidates: Vec<usize> = (0..total).filter(|&v| alive[v]).collect();
        let &v = candidates.choose(rng).expect("graph has vertices");
        alive[v] = false;
        if connected(&adj, &alive) {
            true
        } else {
            alive[v] = true;
            false
        }
    })?;
    for (e, &(u, v)) in grid_edges.iter().enumerate() {
        if !alive[u] || !alive[v] {
            edge_alive[e] = false;
        }
    }

    // Edge removal, relative to the post-vertex-removal edge count.
    let remaining = edge_alive.iter().filter(|&&a| a).count();
    let target_e = (params.edge_removal_frac * remaining as f64).floor() as usize;
    remove_with_retries(target_e, &mut rng, "edge", |rng| {
        let candidates: Vec<usize> = (0..grid_edges.len()).filter(|&e| edge_alive[e]).collect();
        let &e = candidates.choose(rng).expect("graph has edges");
        edge_alive[e] = false;
        if connected(&adjacency(&edge_alive), &alive) {
            true
        } else {
            edge_alive[e] = true;
            false
        }
    })?;

    // Renumber survivors, perturb coordinates, recompute lengths.
    let noise = if params.coord_noise_sigma > 0.0 {
        Some(Normal::new(0.0, params.coord_noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };
    let mut new_id = vec![usize::MAX; total];
    let mut vertices = Vec::new();
    for old in 0..total {
        if !alive[old] {
            continue;
        }
        let (r, c) = (old / k, old % k);
        let (mut x, mut y) = (c as f64 * step, r as f64 * step);
        if let Some(noise) = &noise {
            x += noise.sample(&mut rng);
            y += noise.sample(&mut rng);
        }
        new_id[old] = vertices.len();
        vertices.push(Vertex {
            id: vertices.len(),
            x,
            y,
        });
    }
    let edges = grid_edges
        .iter()
        .zip(&edge_alive)
        .filter(|(_, &a)| a)
        .map(|(&(u, v), _)| {
            let (a, b) = (vertices[new_id[u]], vertices[new_id[v]]);
            Edge {
                u: new_id[u],
                v: new_id[v],
                w: (a.x - b.x).hypot(a.y - b.y),
            }
        })
        .collect();
    EnvGraph::new(params.seed, params.side, vertices, edges)
}

/// Runs `attempt` until `target` removals succeed, allowing 100 tries per
/// removal in total.
fn remove_with_retries(
    target: usize,
    rng: &mut ChaCha8Rng,
    what: &str,
    mut attempt: impl FnMut(&mut ChaCha8Rng) -> bool,
) -> Result<()> {
    let budget = 100 * target;
    let mut done = 0;
    let mut tries = 0;
    while done < target {
        if tries >= budget {
            return Err(Error::GenerationFailed(format!(
                "removed only {done} of {target} {what}s within {budget} attempts"
            )));
        }
        tries += 1;
        if attempt(rng) {
            done += 1;
        }
    }
    Ok(())
}

/// All-pairs shortest paths with path reconstruction.
///
/// Distances are exactly symmetric: the pair `(u, v)` with `u <= v` is
/// always resolved from source `u`.
#[derive(Debug, Clone)]
pub struct DistanceOracle {
    n: usize,
    dist: Vec<f64>,
    pred: Vec<usize>,
}

#[derive(Copy, Clone, PartialEq)]
struct QueueItem {
    dist: f64,
    vertex: usize,
}

impl Eq for QueueItem {}

impl Ord for QueueItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn shortest_paths(env: &EnvGraph) -> DistanceOracle {
    let n = env.len();
    let mut dist = vec![f64::INFINITY; n * n];
    let mut pred = vec![usize::MAX; n * n];
    for s in 0..n {
        let d = &mut dist[s * n..(s + 1) * n];
        let p = &mut pred[s * n..(s + 1) * n];
        d[s] = 0.0;
        let mut heap = BinaryHeap::from([QueueItem { dist: 0.0, vertex: s }]);
        while let Some(QueueItem { dist: du, vertex: u }) = heap.pop() {
            if du > d[u] {
                continue;
            }
            for &(v, w) in env.neighbors(u) {
                let alt = du + w;
                if alt < d[v] {
                    d[v] = alt;
                    p[v] = u;
                    heap.push(QueueItem { dist: alt, vertex: v });
                }
            }
        }
    }
    DistanceOracle { n, dist, pred }
}

impl DistanceOracle {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dist(&self, u: usize, v: usize) -> f64 {
        let (a, b) = if u <= v { (u, v) } else { (v, u) };
        self.dist[a * self.n + b]
    }

    /// Vertex sequence of a shortest path from `u` to `v`, both inclusive.
    pub fn path(&self, u: usize, v: usize) -> Vec<usize> {
        let (a, b) = if u <= v { (u, v) } else { (v, u) };
        let mut path = vec![b];
        let mut cur = b;
        while cur != a {
            cur = self.pred[a * self.n + cur];
            path.push(cur);
        }
        // path runs b -> a here
        if u <= v {
            path.reverse();
        }
        path
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> EnvGraph {
        let vertices = (0..3).map(|id| Vertex { id, x: 0.0, y: 0.0 }).collect();
        let edges = vec![
            Edge { u: 0, v: 1, w: 3.0 },
            Edge { u: 1, v: 2, w: 4.0 },
            Edge { u: 0, v: 2, w: 10.0 },
        ];
        EnvGraph::new(0, 0.0, vertices, edges).unwrap()
    }

    fn exact_grid(side: f64) -> EnvGraph {
        generate_random_env(&GenParams {
            side,
            vertex_removal_frac: 0.0,
            edge_removal_frac: 0.0,
            coord_noise_sigma: 0.0,
            ..GenParams::default()
        })
        .unwrap()
    }

    #[test]
    fn triangle_routes_through_middle() {
        let g = triangle();
        let d = shortest_paths(&g);
        assert_eq!(d.dist(0, 2), 7.0);
        assert_eq!(d.path(0, 2), vec![0, 1, 2]);
        assert_eq!(d.path(2, 0), vec![2, 1, 0]);
        for u in 0..3 {
            assert_eq!(d.dist(u, u), 0.0);
            assert_eq!(d.path(u, u), vec![u]);
        }
    }

    #[test]
    fn noiseless_grid_has_unit_lengths() {
        let g = exact_grid(60.0);
        assert_eq!(g.len(), 49);
        assert_eq!(g.edges.len(), 2 * 7 * 6);
        assert!(g.edges.iter().all(|e| (e.w - 10.0).abs() < 1e-12));
        let d = shortest_paths(&g);
        assert!((d.dist(0, 48) - 120.0).abs() < 1e-9);
    }

    #[test]
    fn removal_counts_follow_floor() {
        for seed in 0..5 {
            let g = generate_random_env(&GenParams::new(60.0, seed)).unwrap();
            assert_eq!(g.len(), 49 - 4);
            assert!(g.is_connected());
            let g = generate_random_env(&GenParams::new(120.0, seed)).unwrap();
            assert_eq!(g.len(), 169 - 16);
        }
    }

    #[test]
    fn edge_removal_uses_post_vertex_count() {
        let g = generate_random_env(&GenParams::new(60.0, 3)).unwrap();
        let no_edge_removal = generate_random_env(&GenParams {
            edge_removal_frac: 0.0,
            ..GenParams::new(60.0, 3)
        })
        .unwrap();
        let before = no_edge_removal.edges.len();
        assert_eq!(g.edges.len(), before - (0.03 * before as f64).floor() as usize);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_random_env(&GenParams::new(80.0, 11)).unwrap();
        let b = generate_random_env(&GenParams::new(80.0, 11)).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = generate_random_env(&GenParams::new(80.0, 12)).unwrap();
        assert_ne!(a.to_json().unwrap(), c.to_json().unwrap());
    }

    #[test]
    fn json_round_trip_rebuilds_adjacency() {
        let g = generate_random_env(&GenParams::new(60.0, 5)).unwrap();
        let back = EnvGraph::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.neighbors(0), g.neighbors(0));
    }

    #[test]
    fn rejects_bad_graphs() {
        let v = |id| Vertex { id, x: 0.0, y: 0.0 };
        let disconnected = EnvGraph::new(0, 0.0, vec![v(0), v(1), v(2)], vec![Edge { u: 0, v: 1, w: 1.0 }]);
        assert!(matches!(disconnected, Err(Error::InvalidGraph(_))));
        let self_loop = EnvGraph::new(0, 0.0, vec![v(0)], vec![Edge { u: 0, v: 0, w: 1.0 }]);
        assert!(self_loop.is_err());
        let dup = EnvGraph::new(
            0,
            0.0,
            vec![v(0), v(1)],
            vec![Edge { u: 0, v: 1, w: 1.0 }, Edge { u: 1, v: 0, w: 2.0 }],
        );
        assert!(dup.is_err());
        let zero = EnvGraph::new(0, 0.0, vec![v(0), v(1)], vec![Edge { u: 0, v: 1, w: 0.0 }]);
        assert!(zero.is_err());
        let gap = EnvGraph::new(0, 0.0, vec![v(0), v(2)], vec![Edge { u: 0, v: 2, w: 1.0 }]);
        assert!(gap.is_err());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(generate_random_env(&GenParams::new(10.0, 0)).is_err());
        assert!(generate_random_env(&GenParams::new(65.0, 0)).is_err());
    }

    #[test]
    fn impossible_removal_exhausts_budget() {
        // removing 90% of a path-like 3x3 grid's edges must disconnect it
        let r = generate_random_env(&GenParams {
            side: 20.0,
            vertex_removal_frac: 0.0,
            edge_removal_frac: 0.9,
            ..GenParams::default()
        });
        assert!(matches!(r, Err(Error::GenerationFailed(_))));
    }
}
