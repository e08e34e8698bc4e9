#![allow(dead_code)]

use std::sync::Arc;

use cge_core::linalg::DenseMatrix;
use cge_core::{Element, Objective};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random anchored pose graph with loop candidates on non-edges, small
/// enough for brute force.
pub struct Synthetic {
    pub objective: Arc<Objective>,
    pub base: DenseMatrix,
    pub elements: Vec<Element>,
    pub alpha: f64,
    pub d_max: f64,
}

pub fn synthetic(seed: u64, max_candidates: usize) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poses = rng.gen_range(6..=15);
    let anchors = rng.gen_range(1..=2);
    let row = |p: usize| if p < anchors { None } else { Some(p - anchors) };
    let mut base = DenseMatrix::zeros(poses - anchors);
    let mut edges = std::collections::HashSet::new();
    let link = |base: &mut DenseMatrix, edges: &mut std::collections::HashSet<(usize, usize)>, a: usize, b: usize, g: f64| {
        let key = (a.min(b), a.max(b));
        if edges.insert(key) {
            base.add_edge(row(a), row(b), g);
        }
    };
    for p in 1..poses {
        let q = rng.gen_range(0..p);
        let g = rng.gen_range(0.5..50.0);
        link(&mut base, &mut edges, q, p, g);
    }
    for _ in 0..rng.gen_range(0..poses) {
        let (a, b) = (rng.gen_range(0..poses), rng.gen_range(0..poses));
        if a != b {
            let g = rng.gen_range(0.5..50.0);
            link(&mut base, &mut edges, a, b, g);
        }
    }

    let mut free: Vec<(usize, usize)> = (0..poses)
        .flat_map(|a| (a + 1..poses).map(move |b| (a, b)))
        .filter(|&(a, b)| !edges.contains(&(a, b)) && (row(a).is_some() || row(b).is_some()))
        .collect();
    let want = rng.gen_range(4..=max_candidates.max(4)).min(free.len());
    let mut elements = Vec::with_capacity(want);
    for _ in 0..want {
        let (a, b) = free.swap_remove(rng.gen_range(0..free.len()));
        elements.push(Element {
            rows: (row(a), row(b)),
            gamma: rng.gen_range(0.5..50.0),
            travel: rng.gen_range(0.5..20.0),
        });
    }

    // α from the benefit-per-meter ratios at the empty set
    let probe = Objective::new(base.clone(), elements.clone(), 0.0, 0.0).unwrap();
    let empty = probe.empty_state();
    let ratios: Vec<f64> = (0..elements.len())
        .map(|k| empty.marginal(k) / (2.0 * elements[k].travel))
        .collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let alpha = lo + rng.gen_range(0.1..0.6) * (hi - lo);
    let max_travel = elements.iter().map(|e| e.travel).fold(0.0, f64::max);
    let d_max = 2.0 * max_travel * elements.len() as f64;
    let objective = Objective::new(base.clone(), elements.clone(), alpha, d_max).unwrap();
    Synthetic {
        objective,
        base,
        elements,
        alpha,
        d_max,
    }
}

pub fn to_nalgebra(m: &DenseMatrix) -> DMatrix<f64> {
    let n = m.dim();
    DMatrix::from_row_slice(n, n, m.as_slice())
}

/// `f(set)` computed independently with nalgebra's Cholesky.
pub fn oracle_value(s: &Synthetic, set: &[usize]) -> f64 {
    let n = s.base.dim();
    let mut m = to_nalgebra(&s.base);
    let mut travel = 0.0;
    for &k in set {
        let e = &s.elements[k];
        let mut b = nalgebra::DVector::zeros(n);
        if let Some(i) = e.rows.0 {
            b[i] += 1.0;
        }
        if let Some(j) = e.rows.1 {
            b[j] -= 1.0;
        }
        m += e.gamma * &b * b.transpose();
        travel += 2.0 * e.travel;
    }
    let chol = m.cholesky().expect("anchored Laplacian is PD");
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    log_det / n as f64 - s.alpha * travel + s.d_max
}

/// `|x − y| ≤ tol · max(1, |x|, |y|)`.
pub fn close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * 1f64.max(x.abs()).max(y.abs())
}

/// Members of `mask` as ascending indices.
pub fn subset(mask: u64, k: usize) -> Vec<usize> {
    (0..k).filter(|&i| mask >> i & 1 == 1).collect()
}
