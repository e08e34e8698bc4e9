//! The per-iteration linear program of the deterministic USM algorithm and
//! a small bounded-variable simplex that solves it to a vertex.

use crate::error::{Error, Result};

/// One support pair of the distribution: its probability and the two
/// marginals `a = f(X+u) − f(X)`, `b = f(Y−u) − f(Y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpPair {
    pub p: f64,
    pub a: f64,
    pub b: f64,
}

/// Objective weights on `Σz` and `Σw`.
pub const Z_WEIGHT: f64 = 0.5;
pub const W_WEIGHT: f64 = 0.6;

const FEAS_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-12;
const PIVOT_TOL: f64 = 1e-12;
/// Snapping threshold for near-integral weights.
pub const SNAP: f64 = 1e-12;

/// Returns `z` per pair (`w = 1 − z`) at an extreme point of
///
/// ```text
/// E[z·a + w·b] ≥ 2·E[z·b]
/// E[z·a + w·b] ≥ 2·E[w·a]
/// z + w = 1,  z, w ≥ 0
/// ```
///
/// minimizing `0.5·Σz + 0.6·Σw`. With `w = 1 − z` the constraints become
/// `Σ p(a − 3b)z ≥ −Σ p·b` and `Σ p(3a − b)z ≥ Σ p(2a − b)`.
pub fn lp_extreme_point(pairs: &[LpPair]) -> Result<Vec<f64>> {
    let k = pairs.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut rows = [vec![0.0; k], vec![0.0; k]];
    let mut rhs = [0.0; 2];
    for (i, q) in pairs.iter().enumerate() {
        rows[0][i] = q.p * (q.a - 3.0 * q.b);
        rows[1][i] = q.p * (3.0 * q.a - q.b);
        rhs[0] -= q.p * q.b;
        rhs[1] += q.p * (2.0 * q.a - q.b);
    }
    for r in 0..2 {
        let s = rows[r].iter().fold(rhs[r].abs(), |m, x| m.max(x.abs()));
        if s > 0.0 {
            rows[r].iter_mut().for_each(|x| *x /= s);
            rhs[r] /= s;
        }
    }
    // ≥ rows become equalities with surplus columns: Σ c z − s = r
    let mut lp = BoundedLp::new(2);
    for i in 0..k {
        lp.push_column(vec![rows[0][i], rows[1][i]], 1.0, 1.0);
    }
    let surplus = [lp.push_column(vec![-1.0, 0.0], f64::INFINITY, 0.0), lp.push_column(vec![0.0, -1.0], f64::INFINITY, 0.0)];
    let mut artificials = Vec::new();
    for r in 0..2 {
        let lhs: f64 = rows[r].iter().sum();
        let residual = rhs[r] - lhs;
        if residual <= 0.0 {
            lp.basis[r] = surplus[r];
        } else {
            let mut col = vec![0.0, 0.0];
            col[r] = 1.0;
            let a = lp.push_column(col, f64::INFINITY, 0.0);
            lp.basis[r] = a;
            artificials.push(a);
        }
    }
    lp.rhs = rhs.to_vec();
    lp.sync_basic()?;

    if !artificials.is_empty() {
        let cost: Vec<f64> = (0..lp.cols()).map(|j| if artificials.contains(&j) { 1.0 } else { 0.0 }).collect();
        lp.optimize(&cost)?;
        let infeasibility: f64 = artificials.iter().map(|&a| lp.x[a]).sum();
        if infeasibility > FEAS_TOL {
            return Err(Error::InfeasibleLp(infeasibility));
        }
        for &a in &artificials {
            lp.upper[a] = 0.0;
            lp.x[a] = 0.0;
        }
        lp.sync_basic()?;
    }
    let cost: Vec<f64> = (0..lp.cols()).map(|j| if j < k { Z_WEIGHT - W_WEIGHT } else { 0.0 }).collect();
    lp.optimize(&cost)?;
    Ok(lp.x[..k]
        .iter()
        .map(|&z| {
            if z < SNAP {
                0.0
            } else if z > 1.0 - SNAP {
                1.0
            } else {
                z
            }
        })
        .collect())
}

/// `min cᵀx  s.t.  A x = rhs,  0 ≤ x ≤ upper` with a revised simplex over an
/// explicit basis inverse. Nonbasic variables sit at one of their bounds.
struct BoundedLp {
    m: usize,
    columns: Vec<Vec<f64>>,
    upper: Vec<f64>,
    x: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
}

impl BoundedLp {
    fn new(m: usize) -> Self {
        Self {
            m,
            columns: Vec::new(),
            upper: Vec::new(),
            x: Vec::new(),
            rhs: vec![0.0; m],
            basis: vec![usize::MAX; m],
        }
    }

    fn cols(&self) -> usize {
        self.columns.len()
    }

    fn push_column(&mut self, col: Vec<f64>, upper: f64, value: f64) -> usize {
        self.columns.push(col);
        self.upper.push(upper);
        self.x.push(value);
        self.columns.len() - 1
    }

    fn basis_inverse(&self) -> Result<Vec<Vec<f64>>> {
        let m = self.m;
        let mut a: Vec<Vec<f64>> = (0..m)
            .map(|r| {
                let mut row: Vec<f64> = self.basis.iter().map(|&j| self.columns[j][r]).collect();
                row.extend((0..m).map(|c| if c == r { 1.0 } else { 0.0 }));
                row
            })
            .collect();
        for c in 0..m {
            let p = (c..m)
                .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
                .expect("non-empty range");
            if a[p][c].abs() < PIVOT_TOL {
                return Err(Error::Consistency("singular simplex basis".into()));
            }
            a.swap(c, p);
            let d = a[c][c];
            a[c].iter_mut().for_each(|x| *x /= d);
            for r in 0..m {
                if r != c {
                    let f = a[r][c];
                    if f != 0.0 {
                        for q in 0..2 * m {
                            a[r][q] -= f * a[c][q];
                        }
                    }
                }
            }
        }
        Ok(a.into_iter().map(|row| row[m..].to_vec()).collect())
    }

    /// Recomputes basic values from the nonbasic ones.
    fn sync_basic(&mut self) -> Result<Vec<Vec<f64>>> {
        let inv = self.basis_inverse()?;
        let mut r = self.rhs.clone();
        for j in 0..self.cols() {
            if !self.basis.contains(&j) && self.x[j] != 0.0 {
                for (ri, a) in r.iter_mut().zip(&self.columns[j]) {
                    *ri -= a * self.x[j];
                }
            }
        }
        for (k, &j) in self.basis.iter().enumerate() {
            self.x[j] = (0..self.m).map(|i| inv[k][i] * r[i]).sum();
        }
        Ok(inv)
    }

    fn optimize(&mut self, cost: &[f64]) -> Result<()> {
        let limit = 100 * (self.cols() + self.m);
        for _ in 0..limit {
            let inv = self.sync_basic()?;
            let y: Vec<f64> = (0..self.m)
                .map(|i| (0..self.m).map(|k| cost[self.basis[k]] * inv[k][i]).sum())
                .collect();
            // Bland: first eligible column enters
            let entering = (0..self.cols()).filter(|j| !self.basis.contains(j)).find_map(|j| {
                if self.upper[j] == 0.0 {
                    return None;
                }
                let d = cost[j] - self.columns[j].iter().zip(&y).map(|(a, y)| a * y).sum::<f64>();
                let at_upper = self.upper[j].is_finite() && self.x[j] >= self.upper[j];
                if !at_upper && d < -COST_TOL {
                    Some((j, 1.0))
                } else if at_upper && d > COST_TOL {
                    Some((j, -1.0))
                } else {
                    None
                }
            });
            let Some((j, dir)) = entering else {
                return Ok(());
            };
            let alpha: Vec<f64> = (0..self.m)
                .map(|k| (0..self.m).map(|i| inv[k][i] * self.columns[j][i]).sum())
                .collect();
            // (step, variable index, basis slot or None for a bound flip, lands at upper)
            let mut best: (f64, usize, Option<usize>, bool) = (self.upper[j], j, None, dir > 0.0);
            for (k, &bj) in self.basis.iter().enumerate() {
                let rate = -dir * alpha[k];
                let (step, to_upper) = if rate < -PIVOT_TOL {
                    ((self.x[bj].max(0.0)) / -rate, false)
                } else if rate > PIVOT_TOL && self.upper[bj].is_finite() {
                    (((self.upper[bj] - self.x[bj]).max(0.0)) / rate, true)
                } else {
                    continue;
                };
                if step < best.0 || (step == best.0 && bj < best.1) {
                    best = (step, bj, Some(k), to_upper);
                }
            }
            let (step, leaving, slot, to_upper) = best;
            if !step.is_finite() {
                return Err(Error::Consistency("unbounded simplex direction".into()));
            }
            self.x[j] += dir * step;
            for (k, &bj) in self.basis.iter().enumerate() {
                self.x[bj] -= dir * step * alpha[k];
            }
            match slot {
                Some(k) => {
                    self.x[leaving] = if to_upper { self.upper[leaving] } else { 0.0 };
                    self.basis[k] = j;
                }
                None => {
                    self.x[j] = if dir > 0.0 { self.upper[j] } else { 0.0 };
                }
            }
        }
        Err(Error::Consistency("simplex iteration limit reached".into()))
    }
}
