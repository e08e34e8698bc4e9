//! Candidate loop edges, the benefit-per-meter threshold α, and pruning.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env_graph::DistanceOracle;
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::objective::{topology_gain, Element, Objective};
use crate::pose_graph::{reduced_weighted_laplacian, CollabPoseGraph, Covariance, ReducedLaplacian};

/// Travel distance assigned to candidates whose poses sit on the same vertex.
pub const CO_LOCATED_TRAVEL: f64 = 0.1;

/// Default interpolation factor between α bounds.
pub const DEFAULT_LAMBDA: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopCandidate {
    /// Pose ids with `i < j`.
    pub i: usize,
    pub j: usize,
    pub gamma: f64,
    /// One-way shortest-path distance between the poses' vertices.
    pub travel: f64,
}

impl LoopCandidate {
    pub fn element(&self, rows: &[Option<usize>]) -> Element {
        Element {
            rows: (rows[self.i], rows[self.j]),
            gamma: self.gamma,
            travel: self.travel,
        }
    }
}

/// Every pose pair that is not already joined by an edge.
pub fn enumerate_candidates(
    cpg: &CollabPoseGraph,
    oracle: &DistanceOracle,
    cov: Covariance,
) -> Result<Vec<LoopCandidate>> {
    let gamma = cov.d_opt_weight()?;
    let linked = cpg.edge_set();
    let mut out = Vec::new();
    for i in 0..cpg.len() {
        for j in (i + 1)..cpg.len() {
            if linked.contains(&(i, j)) {
                continue;
            }
            let (vi, vj) = (cpg.poses[i].vertex, cpg.poses[j].vertex);
            let travel = if vi == vj {
                CO_LOCATED_TRAVEL
            } else {
                oracle.dist(vi, vj)
            };
            out.push(LoopCandidate { i, j, gamma, travel });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaBounds {
    pub min: f64,
    pub max: f64,
    pub lambda: f64,
    pub alpha: f64,
}

/// `gain / (2ω)`, information per meter of detour.
pub fn benefit_ratio(topology_gain: f64, travel: f64) -> f64 {
    topology_gain / (2.0 * travel)
}

/// α bounds from the topology-only ratios and `α = min + λ(max − min)`.
pub fn compute_alpha(ratios: &[f64], lambda: f64) -> Result<AlphaBounds> {
    if ratios.is_empty() {
        return Err(Error::NoCandidates);
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(crate::error::invalid(format!("lambda {lambda} is outside [0, 1]")));
    }
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(AlphaBounds {
        min,
        max,
        lambda,
        alpha: min + lambda * (max - min),
    })
}

/// The full candidate set with topology gains at the explored graph.
///
/// Cheap to re-threshold for different λ.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    pub candidates: Vec<LoopCandidate>,
    /// `(1/n)·log(1 + γ bᵀL₀⁻¹b)` per candidate.
    pub topology_gains: Vec<f64>,
    pub laplacian: Arc<ReducedLaplacian>,
    /// `2 · max ω · |S|` over the unpruned set.
    pub d_max: f64,
}

impl CandidatePool {
    pub fn new(cpg: &CollabPoseGraph, oracle: &DistanceOracle, cov: Covariance) -> Result<Self> {
        let candidates = enumerate_candidates(cpg, oracle, cov)?;
        let laplacian = reduced_weighted_laplacian(cpg)?;
        Self::from_parts(candidates, laplacian)
    }

    pub fn from_parts(candidates: Vec<LoopCandidate>, laplacian: ReducedLaplacian) -> Result<Self> {
        let factor = Cholesky::factor(&laplacian.matrix)?;
        let topology_gains = candidates
            .iter()
            .map(|c| topology_gain(&factor, &c.element(&laplacian.rows)))
            .collect();
        let max_travel = candidates.iter().map(|c| c.travel).fold(0.0, f64::max);
        Ok(Self {
            d_max: 2.0 * max_travel * candidates.len() as f64,
            candidates,
            topology_gains,
            laplacian: Arc::new(laplacian),
        })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.candidates
            .iter()
            .zip(&self.topology_gains)
            .map(|(c, &g)| benefit_ratio(g, c.travel))
            .collect()
    }

    /// Thresholds at `α(λ)` and orders the survivors.
    pub fn ground_set(&self, lambda: f64) -> Result<GroundSet> {
        let bounds = compute_alpha(&self.ratios(), lambda)?;
        Ok(self.prune(bounds))
    }

    /// Keeps candidates whose ratio strictly exceeds `bounds.alpha`, sorted
    /// by descending initial marginal, then ascending pose pair.
    pub fn prune(&self, bounds: AlphaBounds) -> GroundSet {
        let alpha = bounds.alpha;
        let mut kept: Vec<(LoopCandidate, f64)> = self
            .candidates
            .iter()
            .zip(&self.topology_gains)
            .filter(|(c, &g)| benefit_ratio(g, c.travel) > alpha)
            .map(|(c, &g)| (*c, g - 2.0 * alpha * c.travel))
            .collect();
        kept.sort_by(|a, b| b.1.total_cmp(&a.1).then((a.0.i, a.0.j).cmp(&(b.0.i, b.0.j))));
        let (candidates, initial_marginals) = kept.into_iter().unzip();
        GroundSet {
            candidates,
            initial_marginals,
            total: self.len(),
            d_max: self.d_max,
            bounds,
            laplacian: Arc::clone(&self.laplacian),
        }
    }
}

/// Pruned, ordered ground set with everything the objective needs.
#[derive(Debug, Clone)]
pub struct GroundSet {
    pub candidates: Vec<LoopCandidate>,
    /// `Δf(z | ∅)` including the distance term.
    pub initial_marginals: Vec<f64>,
    /// Candidate count before pruning.
    pub total: usize,
    pub d_max: f64,
    pub bounds: AlphaBounds,
    pub laplacian: Arc<ReducedLaplacian>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundSummary {
    pub total: usize,
    pub valid: usize,
    pub d_max: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha: f64,
    pub lambda: f64,
}

impl GroundSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn alpha(&self) -> f64 {
        self.bounds.alpha
    }

    pub fn elements(&self) -> Vec<Element> {
        self.candidates.iter().map(|c| c.element(&self.laplacian.rows)).collect()
    }

    /// The objective over this ground set. Fixed-order solvers visit the
    /// candidates by ascending pose pair rather than by initial marginal,
    /// which would hand them most of what ordering is meant to add.
    pub fn objective(&self) -> Result<Arc<Objective>> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&k| (self.candidates[k].i, self.candidates[k].j));
        Objective::with_visit_order(self.laplacian.matrix.clone(), self.elements(), self.alpha(), self.d_max, order)
    }

    pub fn summary(&self) -> GroundSummary {
        GroundSummary {
            total: self.total,
            valid: self.len(),
            d_max: self.d_max,
            alpha_min: self.bounds.min,
            alpha_max: self.bounds.max,
            alpha: self.bounds.alpha,
            lambda: self.bounds.lambda,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_graph::{shortest_paths, Edge, EnvGraph, Vertex};
    use crate::pose_graph::build_collaborative;
    use crate::vrp::Walk;

    fn path_env(n: usize) -> EnvGraph {
        let vertices = (0..n).map(|id| Vertex { id, x: id as f64, y: 0.0 }).collect();
        let edges = (1..n).map(|v| Edge { u: v - 1, v, w: 1.0 }).collect();
        EnvGraph::new(0, 0.0, vertices, edges).unwrap()
    }

    fn walk(robot: usize, v: &[usize]) -> Walk {
        Walk {
            robot,
            vertices: v.to_vec(),
            length: 0.0,
        }
    }

    #[test]
    fn chain_has_one_candidate() {
        let env = path_env(3);
        let cpg = build_collaborative(&[walk(0, &[0, 1, 2])], Covariance::default_se2()).unwrap();
        let c = enumerate_candidates(&cpg, &shortest_paths(&env), Covariance::default_se2()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].i, c[0].j), (0, 2));
        assert!((c[0].travel - 2.0).abs() < 1e-12);
    }

    #[test]
    fn complete_graph_has_no_candidates() {
        let env = path_env(3);
        let cpg = build_collaborative(&[walk(0, &[0, 1, 2, 0])], Covariance::default_se2()).unwrap();
        let c = enumerate_candidates(&cpg, &shortest_paths(&env), Covariance::default_se2()).unwrap();
        assert!(c.is_empty());
        let pool = CandidatePool::new(&cpg, &shortest_paths(&env), Covariance::default_se2()).unwrap();
        assert!(matches!(pool.ground_set(0.3), Err(Error::NoCandidates)));
    }

    #[test]
    fn co_located_poses_get_floor_travel() {
        let env = path_env(3);
        let cpg =
            build_collaborative(&[walk(0, &[0, 1]), walk(1, &[2, 1])], Covariance::default_se2()).unwrap();
        let c = enumerate_candidates(&cpg, &shortest_paths(&env), Covariance::default_se2()).unwrap();
        // poses: r0 {0:v0, 1:v1}, r1 {2:v2, 3:v1}; edges 0-1, 2-3, 1-3
        let pairs: Vec<_> = c.iter().map(|c| (c.i, c.j)).collect();
        assert_eq!(pairs, vec![(0, 2), (0, 3), (1, 2)]);
        assert!(c.iter().all(|c| c.travel >= CO_LOCATED_TRAVEL));
    }

    #[test]
    fn alpha_endpoints() {
        let r = [0.5, 2.0, 1.0];
        assert_eq!(compute_alpha(&r, 0.0).unwrap().alpha, 0.5);
        assert_eq!(compute_alpha(&r, 1.0).unwrap().alpha, 2.0);
        assert!((compute_alpha(&r, 0.3).unwrap().alpha - 0.95).abs() < 1e-15);
        let one = compute_alpha(&[1.5], 0.7).unwrap();
        assert_eq!((one.min, one.max, one.alpha), (1.5, 1.5, 1.5));
        assert!(matches!(compute_alpha(&[], 0.3), Err(Error::NoCandidates)));
        assert!(compute_alpha(&r, 1.5).is_err());
    }

    fn small_pool() -> CandidatePool {
        let env = path_env(6);
        let cpg = build_collaborative(&[walk(0, &[0, 1, 2, 3, 4, 5])], Covariance::default_se2()).unwrap();
        CandidatePool::new(&cpg, &shortest_paths(&env), Covariance::default_se2()).unwrap()
    }

    #[test]
    fn pruning_at_the_extremes() {
        let pool = small_pool();
        assert_eq!(pool.len(), 10);
        assert!(pool.ground_set(1.0).unwrap().len() <= 1);
        let mut b = compute_alpha(&pool.ratios(), 0.0).unwrap();
        b.alpha = b.min - 1.0;
        assert_eq!(pool.prune(b).len(), pool.len());
    }

    #[test]
    fn pruned_set_is_sorted_and_keeps_d_max() {
        let pool = small_pool();
        let g = pool.ground_set(0.3).unwrap();
        assert!(g.initial_marginals.windows(2).all(|w| w[0] >= w[1]));
        // longest candidate is (0, 5) with ω = 5
        assert!((g.d_max - 2.0 * 5.0 * 10.0).abs() < 1e-12);
        assert_eq!(g.total, 10);
        let o = g.objective().unwrap();
        let s = o.empty_state();
        for (k, m) in g.initial_marginals.iter().enumerate() {
            assert!((s.marginal(k) - m).abs() < 1e-12);
        }
    }

    #[test]
    fn valid_count_shrinks_with_lambda() {
        let pool = small_pool();
        let counts: Vec<usize> = [0.1, 0.3, 0.5, 0.7, 0.9]
            .iter()
            .map(|&l| pool.ground_set(l).unwrap().len())
            .collect();
        assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
    }
}
