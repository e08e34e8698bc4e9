//! Full SE(2) Fisher information of a pose graph and its comparison with
//! the weighted-Laplacian surrogate.
//!
//! Orientations are taken as identity, so every edge contributes
//! `b bᵀ ⊗ Σ⁻¹` with the covariance as given. The usual ½ factor is dropped.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{log_det_spd, DenseMatrix};
use crate::pose_graph::{reduced_weighted_laplacian, CollabPoseGraph, Covariance};
use crate::stats::{pearson, spearman};

/// `Σ_edges b bᵀ ⊗ Σ_e⁻¹` over non-anchored poses, `3n × 3n`.
pub fn build_full_fim(cpg: &CollabPoseGraph, covs: &[Covariance]) -> Result<DenseMatrix> {
    if covs.len() != cpg.edges.len() {
        return Err(invalid(format!("{} covariances for {} edges", covs.len(), cpg.edges.len())));
    }
    // anchoring check and row map shared with the Laplacian
    let rows = reduced_weighted_laplacian(cpg)?.rows;
    let mut fim = DenseMatrix::zeros(3 * cpg.free_count());
    for (e, cov) in cpg.edges.iter().zip(covs) {
        let info = cov.inverse()?;
        let (ri, rj) = (rows[e.i], rows[e.j]);
        for a in 0..3 {
            for b in 0..3 {
                let v = info[a][b];
                if let Some(i) = ri {
                    fim[(3 * i + a, 3 * i + b)] += v;
                }
                if let Some(j) = rj {
                    fim[(3 * j + a, 3 * j + b)] += v;
                }
                if let (Some(i), Some(j)) = (ri, rj) {
                    fim[(3 * i + a, 3 * j + b)] -= v;
                    fim[(3 * j + a, 3 * i + b)] -= v;
                }
            }
        }
    }
    Ok(fim)
}

/// Copy of `cpg` with per-edge covariances and the matching weights.
pub fn with_covariances(cpg: &CollabPoseGraph, covs: &[Covariance]) -> Result<CollabPoseGraph> {
    if covs.len() != cpg.edges.len() {
        return Err(invalid(format!("{} covariances for {} edges", covs.len(), cpg.edges.len())));
    }
    let mut out = cpg.clone();
    for (e, &cov) in out.edges.iter_mut().zip(covs) {
        e.cov = cov;
        e.gamma = cov.d_opt_weight()?;
    }
    Ok(out)
}

/// `(−log det L_γ, −log det FIM)` for one graph and covariance assignment.
pub fn uncertainty_pair(cpg: &CollabPoseGraph, covs: &[Covariance]) -> Result<(f64, f64)> {
    let weighted = with_covariances(cpg, covs)?;
    let l = reduced_weighted_laplacian(&weighted)?;
    let fim = build_full_fim(cpg, covs)?;
    Ok((-log_det_spd(&l.matrix)?, -log_det_spd(&fim)?))
}

/// Diagonal covariance with position standard deviations drawn from
/// `U[0.05, 0.2]` m and heading variance from `U[0.0005, 0.002]` rad².
pub fn random_covariance(rng: &mut impl Rng) -> Covariance {
    let sx: f64 = rng.gen_range(0.05..0.2);
    let sy: f64 = rng.gen_range(0.05..0.2);
    let st: f64 = rng.gen_range(0.0005..0.002);
    Covariance::diag(sx * sx, sy * sy, st)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FimPoint {
    pub trial: usize,
    pub seed: u64,
    pub poses: usize,
    pub edges: usize,
    pub added_loops: usize,
    /// `−log det L_γ`.
    pub laplacian: f64,
    /// `−log det FIM`.
    pub fim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub points: Vec<FimPoint>,
    pub spearman: f64,
    pub pearson: f64,
}

impl CorrelationReport {
    pub fn from_points(points: Vec<FimPoint>) -> Self {
        let x: Vec<f64> = points.iter().map(|p| p.laplacian).collect();
        let y: Vec<f64> = points.iter().map(|p| p.fim).collect();
        Self {
            spearman: spearman(&x, &y),
            pearson: pearson(&x, &y),
            points,
        }
    }
}

/// How the per-edge covariances of a trial are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovarianceModel {
    Homogeneous(Covariance),
    Heterogeneous,
}

/// One correlation sample: adds a random subset of `candidates` (pose
/// pairs) as loop edges, draws covariances, and evaluates both metrics.
pub fn correlation_point(
    cpg: &CollabPoseGraph,
    candidates: &[(usize, usize)],
    max_loops: usize,
    model: CovarianceModel,
    trial: usize,
    seed: u64,
) -> Result<FimPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(0..=max_loops.min(candidates.len()));
    let chosen: Vec<(usize, usize)> = candidates.choose_multiple(&mut rng, count).copied().collect();
    let graph = cpg.with_loop_edges(&chosen, Covariance::default_se2())?;
    let covs: Vec<Covariance> = match model {
        CovarianceModel::Homogeneous(c) => vec![c; graph.edges.len()],
        CovarianceModel::Heterogeneous => (0..graph.edges.len()).map(|_| random_covariance(&mut rng)).collect(),
    };
    let (laplacian, fim) = uncertainty_pair(&graph, &covs)?;
    Ok(FimPoint {
        trial,
        seed,
        poses: graph.len(),
        edges: graph.edges.len(),
        added_loops: count,
        laplacian,
        fim,
    })
}

/// `(−log det L_γ, −log det FIM)` after each prefix of `sequence`, starting
/// with the empty prefix. `loop_cov` is used for every added edge.
pub fn monotone_trace(
    cpg: &CollabPoseGraph,
    base_covs: &[Covariance],
    sequence: &[(usize, usize)],
    loop_cov: Covariance,
) -> Result<Vec<(f64, f64)>> {
    let mut trace = Vec::with_capacity(sequence.len() + 1);
    for k in 0..=sequence.len() {
        let graph = cpg.with_loop_edges(&sequence[..k], loop_cov)?;
        let mut covs = base_covs.to_vec();
        covs.resize(graph.edges.len(), loop_cov);
        trace.push(uncertainty_pair(&graph, &covs)?);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose_graph::{build_collaborative, reduced_unweighted_laplacian};
    use crate::vrp::Walk;

    fn walk(robot: usize, v: &[usize]) -> Walk {
        Walk {
            robot,
            vertices: v.to_vec(),
            length: 0.0,
        }
    }

    #[test]
    fn identity_covariance_single_edge() {
        let cpg = build_collaborative(&[walk(0, &[0, 1])], Covariance::diag(1.0, 1.0, 1.0)).unwrap();
        let fim = build_full_fim(&cpg, &[Covariance::diag(1.0, 1.0, 1.0)]).unwrap();
        assert_eq!(fim, DenseMatrix::identity(3));
        assert!(log_det_spd(&fim).unwrap().abs() < 1e-15);
    }

    #[test]
    fn homogeneous_kronecker_identity() {
        let cpg = build_collaborative(&[walk(0, &[0, 1, 2, 3, 1]), walk(1, &[0, 4, 2])], Covariance::default_se2()).unwrap();
        let cov = Covariance::default_se2();
        let covs = vec![cov; cpg.edges.len()];
        let fim = log_det_spd(&build_full_fim(&cpg, &covs).unwrap()).unwrap();
        let lu = log_det_spd(&reduced_unweighted_laplacian(&cpg).unwrap().matrix).unwrap();
        let n = cpg.free_count() as f64;
        let info_det = 1.0 / cov.det();
        assert!((fim - (3.0 * lu + n * info_det.ln())).abs() < 1e-9 * fim.abs().max(1.0));
        let (l, f) = uncertainty_pair(&cpg, &covs).unwrap();
        assert!((f - 3.0 * l).abs() < 1e-9 * f.abs().max(1.0));
    }

    #[test]
    fn monotone_under_additions() {
        let cpg = build_collaborative(&[walk(0, &[0, 1, 2, 3, 4])], Covariance::default_se2()).unwrap();
        let covs = vec![Covariance::default_se2(); cpg.edges.len()];
        let seq = [(0, 4), (1, 3), (0, 2), (2, 4)];
        let trace = monotone_trace(&cpg, &covs, &seq, Covariance::diag(0.02, 0.03, 0.001)).unwrap();
        assert_eq!(trace.len(), 5);
        for w in trace.windows(2) {
            assert!(w[1].0 <= w[0].0 + 1e-9 && w[1].1 <= w[0].1 + 1e-9);
        }
        assert_eq!(monotone_trace(&cpg, &covs, &[], Covariance::default_se2()).unwrap().len(), 1);
    }

    #[test]
    fn covariance_count_must_match() {
        let cpg = build_collaborative(&[walk(0, &[0, 1])], Covariance::default_se2()).unwrap();
        assert!(build_full_fim(&cpg, &[]).is_err());
    }

    #[test]
    fn random_covariances_are_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let c = random_covariance(&mut rng);
            assert!((0.0025..0.04).contains(&c.0[0][0]));
            assert!((0.0005..0.002).contains(&c.0[2][2]));
        }
    }
}
