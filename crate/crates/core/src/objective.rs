//! The loop-edge selection objective
//!
//! `f(A) = (1/n)·log det(L₀ + Σ_{z∈A} γ_z b_z b_zᵀ) − α·Σ_{z∈A} 2ω(z) + d_max`
//!
//! evaluated incrementally: marginals come from the determinant lemma with a
//! single triangular solve against a Cholesky factor of the current matrix,
//! and set changes are rank-1 updates or downdates of that factor.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::linalg::{Cholesky, DenseMatrix};

/// Number of downdates after which the factor is rebuilt from scratch.
pub const REFACTOR_INTERVAL: u32 = 64;

/// One ground-set element as the objective sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    /// Reduced-Laplacian rows of the two endpoints; `None` for anchors.
    pub rows: (Option<usize>, Option<usize>),
    pub gamma: f64,
    /// One-way travel distance ω.
    pub travel: f64,
}

impl Element {
    fn start(&self) -> Option<usize> {
        match self.rows {
            (Some(a), Some(b)) => Some(a.min(b)),
            (Some(a), None) | (None, Some(a)) => Some(a),
            (None, None) => None,
        }
    }

    /// `√γ · b`, zero before `start`.
    fn scaled_incidence(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        let s = self.gamma.sqrt();
        if let Some(i) = self.rows.0 {
            v[i] += s;
        }
        if let Some(j) = self.rows.1 {
            v[j] -= s;
        }
        v
    }
}

/// `1/n`, or zero for an empty matrix (every pose anchored).
fn scale(n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        1.0 / n as f64
    }
}

/// Information gain `(1/n)·log(1 + γ bᵀA⁻¹b)` of adding `e` to the matrix
/// factored by `chol`, without the distance term.
pub fn topology_gain(chol: &Cholesky, e: &Element) -> f64 {
    let q = chol.edge_quadratic(e.rows.0, e.rows.1);
    scale(chol.dim()) * (e.gamma * q).ln_1p()
}

/// Immutable problem data shared by every state evaluating it.
#[derive(Debug)]
pub struct Objective {
    base: DenseMatrix,
    base_factor: Cholesky,
    base_log_det: f64,
    elements: Vec<Element>,
    visit_order: Vec<usize>,
    alpha: f64,
    d_max: f64,
}

impl Objective {
    pub fn new(base: DenseMatrix, elements: Vec<Element>, alpha: f64, d_max: f64) -> Result<Arc<Self>> {
        let n = base.dim();
        for (k, e) in elements.iter().enumerate() {
            let in_range = |r: Option<usize>| r.map_or(true, |r| r < n);
            if !(in_range(e.rows.0) && in_range(e.rows.1)) {
                return Err(invalid(format!("element {k} refers to a row outside 0..{n}")));
            }
            if !(e.gamma > 0.0 && e.gamma.is_finite() && e.travel >= 0.0 && e.travel.is_finite()) {
                return Err(invalid(format!("element {k} has gamma {} travel {}", e.gamma, e.travel)));
            }
        }
        if !alpha.is_finite() || !d_max.is_finite() {
            return Err(invalid(format!("alpha {alpha} and d_max {d_max} must be finite")));
        }
        let base_factor = Cholesky::factor(&base)?;
        let base_log_det = base_factor.log_det();
        Ok(Arc::new(Self {
            base,
            base_factor,
            base_log_det,
            visit_order: (0..elements.len()).collect(),
            elements,
            alpha,
            d_max,
        }))
    }

    /// Like [`Objective::new`], with the order in which fixed-order solvers
    /// visit the elements. `order` must be a permutation of the indices.
    pub fn with_visit_order(
        base: DenseMatrix,
        elements: Vec<Element>,
        alpha: f64,
        d_max: f64,
        order: Vec<usize>,
    ) -> Result<Arc<Self>> {
        let mut seen = vec![false; elements.len()];
        if order.len() != elements.len() || !order.iter().all(|&u| u < seen.len() && !std::mem::replace(&mut seen[u], true)) {
            return Err(invalid("visit order is not a permutation of the elements"));
        }
        let mut objective = Self::new(base, elements, alpha, d_max)?;
        Arc::get_mut(&mut objective).expect("freshly built").visit_order = order;
        Ok(objective)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Reduced Laplacian dimension `n`.
    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// Element sequence used by solvers that do not pick their own order.
    pub fn visit_order(&self) -> &[usize] {
        &self.visit_order
    }

    pub fn base_log_det(&self) -> f64 {
        self.base_log_det
    }

    /// `f(∅)`.
    pub fn empty_value(&self) -> f64 {
        scale(self.dim()) * self.base_log_det + self.d_max
    }

    /// State holding the empty set, with a fresh oracle counter.
    pub fn empty_state(self: &Arc<Self>) -> ObjectiveState {
        ObjectiveState {
            problem: Arc::clone(self),
            factor: self.base_factor.clone(),
            log_det: self.base_log_det,
            members: vec![false; self.len()],
            size: 0,
            travel_cost: 0.0,
            downdates: 0,
            calls: Arc::new(AtomicU64::new(0)),
        }
    }

    /// State holding the whole ground set, sharing `counter`.
    pub fn full_state(self: &Arc<Self>, counter: &Arc<AtomicU64>) -> Result<ObjectiveState> {
        let all: Vec<usize> = (0..self.len()).collect();
        let mut s = self.state_for(&all)?;
        s.calls = Arc::clone(counter);
        Ok(s)
    }

    /// State for an arbitrary subset, factored from scratch.
    pub fn state_for(self: &Arc<Self>, set: &[usize]) -> Result<ObjectiveState> {
        let mut s = self.empty_state();
        for &u in set {
            if u >= self.len() || s.members[u] {
                return Err(invalid(format!("element {u} is out of range or repeated")));
            }
            s.members[u] = true;
            s.size += 1;
            s.travel_cost += 2.0 * self.elements[u].travel;
        }
        s.refactor()?;
        Ok(s)
    }

    /// `L₀ + Σ_{z∈set} γ b bᵀ` assembled densely.
    pub fn assemble(&self, set: impl IntoIterator<Item = usize>) -> DenseMatrix {
        let mut m = self.base.clone();
        for u in set {
            let e = &self.elements[u];
            m.add_edge(e.rows.0, e.rows.1, e.gamma);
        }
        m
    }

    /// `f(set)` by dense assembly and a fresh factorization; no counter.
    pub fn evaluate_from_scratch(&self, set: &[usize]) -> Result<f64> {
        Ok(self.gain_from_scratch(set)? + self.empty_value())
    }

    /// `f(set) − f(∅)` by dense assembly, avoiding the `d_max` offset.
    pub fn gain_from_scratch(&self, set: &[usize]) -> Result<f64> {
        let log_det = Cholesky::factor(&self.assemble(set.iter().copied()))?.log_det();
        let cost: f64 = set.iter().map(|&u| 2.0 * self.elements[u].travel).sum();
        Ok(scale(self.dim()) * (log_det - self.base_log_det) - self.alpha * cost)
    }
}

/// A selected set together with the Cholesky factor of its matrix.
///
/// Clones share the problem data and the oracle-call counter.
#[derive(Debug, Clone)]
pub struct ObjectiveState {
    problem: Arc<Objective>,
    factor: Cholesky,
    log_det: f64,
    members: Vec<bool>,
    size: usize,
    /// `Σ 2ω` over members.
    travel_cost: f64,
    downdates: u32,
    calls: Arc<AtomicU64>,
}

impl ObjectiveState {
    pub fn problem(&self) -> &Arc<Objective> {
        &self.problem
    }

    pub fn contains(&self, u: usize) -> bool {
        self.members[u]
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn members(&self) -> &[bool] {
        &self.members
    }

    /// Selected element indices in ascending order.
    pub fn selected(&self) -> Vec<usize> {
        (0..self.members.len()).filter(|&u| self.members[u]).collect()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn counter(&self) -> &Arc<AtomicU64> {
        &self.calls
    }

    /// Oracle evaluations so far on the shared counter.
    pub fn oracle_calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    /// Moves this state onto another counter.
    pub fn with_counter(mut self, counter: &Arc<AtomicU64>) -> Self {
        self.calls = Arc::clone(counter);
        self
    }

    fn tick(&self) {
        self.calls.fetch_add(1, Ordering::Relaxed);
    }

    /// `f(A) − f(∅)`; counts one oracle call.
    pub fn gain(&self) -> f64 {
        self.tick();
        self.gain_uncounted()
    }

    fn gain_uncounted(&self) -> f64 {
        let p = &self.problem;
        scale(p.dim()) * (self.log_det - p.base_log_det) - p.alpha * self.travel_cost
    }

    /// `f(A)`; counts one oracle call.
    pub fn value(&self) -> f64 {
        let v = self.gain() + self.problem.empty_value();
        if v < 0.0 {
            log::warn!("objective is negative ({v}) on set {:?}", self.selected());
        }
        v
    }

    /// `f(A ∪ {u}) − f(A)` for `u ∉ A`; counts one oracle call.
    pub fn marginal(&self, u: usize) -> f64 {
        debug_assert!(!self.members[u]);
        self.tick();
        let e = &self.problem.elements[u];
        topology_gain(&self.factor, e) - 2.0 * self.problem.alpha * e.travel
    }

    /// `f(A \ {u}) − f(A)` for `u ∈ A`; counts one oracle call.
    pub fn removal_gain(&self, u: usize) -> f64 {
        debug_assert!(self.members[u]);
        self.tick();
        let e = &self.problem.elements[u];
        let q = self.factor.edge_quadratic(e.rows.0, e.rows.1);
        scale(self.problem.dim()) * (-e.gamma * q).ln_1p() + 2.0 * self.problem.alpha * e.travel
    }

    pub fn add(&mut self, u: usize) -> Result<()> {
        if u >= self.members.len() || self.members[u] {
            return Err(invalid(format!("cannot add element {u}: out of range or already selected")));
        }
        let e = self.problem.elements[u];
        if let Some(start) = e.start() {
            let q = self.factor.edge_quadratic(e.rows.0, e.rows.1);
            let mut v = e.scaled_incidence(self.factor.dim());
            self.factor.rank_one(&mut v, start, 1.0)?;
            self.log_det += (e.gamma * q).ln_1p();
        }
        self.members[u] = true;
        self.size += 1;
        self.travel_cost += 2.0 * e.travel;
        Ok(())
    }

    pub fn remove(&mut self, u: usize) -> Result<()> {
        if u >= self.members.len() || !self.members[u] {
            return Err(invalid(format!("cannot remove element {u}: not selected")));
        }
        let e = self.problem.elements[u];
        self.members[u] = false;
        self.size -= 1;
        self.travel_cost -= 2.0 * e.travel;
        if self.size == 0 {
            self.travel_cost = 0.0;
        }
        if let Some(start) = e.start() {
            self.downdates += 1;
            if self.downdates >= REFACTOR_INTERVAL {
                return self.refactor();
            }
            let q = self.factor.edge_quadratic(e.rows.0, e.rows.1);
            let mut v = e.scaled_incidence(self.factor.dim());
            self.factor.rank_one(&mut v, start, -1.0)?;
            self.log_det += (-e.gamma * q).ln_1p();
        }
        Ok(())
    }

    /// Rebuilds the factor and the cached log det from the member set.
    pub fn refactor(&mut self) -> Result<()> {
        let set = self.selected();
        self.factor = Cholesky::factor(&self.problem.assemble(set.iter().copied()))?;
        self.log_det = self.factor.log_det();
        self.travel_cost = set.iter().map(|&u| 2.0 * self.problem.elements[u].travel).sum();
        self.downdates = 0;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_problem(alpha: f64, d_max: f64) -> Arc<Objective> {
        let base = DenseMatrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 1.0]]);
        let elements = vec![
            // anchor to p2
            Element {
                rows: (None, Some(1)),
                gamma: 1.0,
                travel: 1.0,
            },
            // p1 to p2 again
            Element {
                rows: (Some(0), Some(1)),
                gamma: 2.0,
                travel: 0.5,
            },
        ];
        Objective::new(base, elements, alpha, d_max).unwrap()
    }

    #[test]
    fn empty_value_is_scaled_log_det_plus_offset() {
        let p = chain_problem(0.1, 7.0);
        let s = p.empty_state();
        assert!((s.value() - 7.0).abs() < 1e-14);
        assert_eq!(s.oracle_calls(), 1);
    }

    #[test]
    fn chain_topology_gain_is_half_log_three() {
        let p = chain_problem(0.0, 0.0);
        let s = p.empty_state();
        assert!((s.marginal(0) - 0.5 * 3f64.ln()).abs() < 1e-14);
        assert!((s.marginal(0) - 0.549_306).abs() < 1e-6);
    }

    #[test]
    fn marginal_includes_round_trip_cost() {
        let p = chain_problem(0.25, 0.0);
        let s = p.empty_state();
        assert!((s.marginal(0) - (0.5 * 3f64.ln() - 0.5)).abs() < 1e-14);
    }

    #[test]
    fn add_then_remove_restores_state() {
        let p = chain_problem(0.2, 3.0);
        let mut s = p.empty_state();
        let f0 = s.value();
        let m = s.marginal(1);
        s.add(1).unwrap();
        assert!((s.value() - f0 - m).abs() < 1e-12);
        assert!((s.value() - p.evaluate_from_scratch(&[1]).unwrap()).abs() < 1e-12);
        let r = s.removal_gain(1);
        assert!((r + m).abs() < 1e-12);
        s.remove(1).unwrap();
        assert!((s.log_det() - p.base_log_det()).abs() < 1e-12);
        assert!(s.is_empty());
    }

    #[test]
    fn invalid_changes_are_rejected() {
        let p = chain_problem(0.2, 3.0);
        let mut s = p.empty_state();
        assert!(s.remove(0).is_err());
        s.add(0).unwrap();
        assert!(s.add(0).is_err());
        assert!(s.add(9).is_err());
    }

    #[test]
    fn clones_share_the_counter() {
        let p = chain_problem(0.2, 3.0);
        let s = p.empty_state();
        let t = s.clone();
        s.marginal(0);
        t.marginal(1);
        assert_eq!(s.oracle_calls(), 2);
    }

    #[test]
    fn anchor_only_element_has_no_information() {
        let base = DenseMatrix::from_rows(&[vec![1.0]]);
        let e = Element {
            rows: (None, None),
            gamma: 3.0,
            travel: 2.0,
        };
        let p = Objective::new(base, vec![e], 0.5, 0.0).unwrap();
        let mut s = p.empty_state();
        assert!((s.marginal(0) + 2.0).abs() < 1e-15);
        s.add(0).unwrap();
        assert!((s.gain() + 2.0).abs() < 1e-15);
    }

    #[test]
    fn repeated_downdates_trigger_refactor() {
        let p = chain_problem(0.1, 0.0);
        let mut s = p.empty_state();
        for _ in 0..(3 * REFACTOR_INTERVAL) {
            s.add(0).unwrap();
            s.add(1).unwrap();
            s.remove(0).unwrap();
            s.remove(1).unwrap();
        }
        assert!((s.log_det() - p.base_log_det()).abs() < 1e-10);
    }
}
