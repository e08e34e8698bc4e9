//! Dense symmetric matrices and a Cholesky factor that supports rank-1
//! updates and downdates.
//!
//! Everything here is row-major and square. Matrices in this crate stay below
//! a few hundred rows, so dense storage is both simpler and faster than a
//! sparse factorization.

use crate::error::{Error, Result};

/// Square dense matrix, row-major. Only used for symmetric matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Adds `weight · b bᵀ` where `b` has `+1` at `i` and `-1` at `j`;
    /// `None` marks an anchored (removed) endpoint.
    pub fn add_edge(&mut self, i: Option<usize>, j: Option<usize>, weight: f64) {
        if let Some(i) = i {
            self[(i, i)] += weight;
        }
        if let Some(j) = j {
            self[(j, j)] += weight;
        }
        if let (Some(i), Some(j)) = (i, j) {
            self[(i, j)] -= weight;
            self[(j, i)] -= weight;
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
///
/// The strict upper triangle of the storage is never read.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        let n = a.dim();
        let mut l = a.as_slice().to_vec();
        for i in 0..n {
            let (done, rest) = l.split_at_mut(i * n);
            let row_i = &mut rest[..n];
            for j in 0..i {
                let row_j = &done[j * n..j * n + n];
                let mut s = row_i[j];
                for k in 0..j {
                    s -= row_i[k] * row_j[k];
                }
                row_i[j] = s / row_j[j];
            }
            let mut d = row_i[i];
            for k in 0..i {
                d -= row_i[k] * row_i[k];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: i, value: d });
            }
            row_i[i] = d.sqrt();
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.at(i, i).ln()).sum::<f64>()
    }

    /// Solves `L y = v` for `y` where `v` is zero before index `start`.
    /// Writes the result into `v`.
    pub fn forward_solve_from(&self, v: &mut [f64], start: usize) {
        let n = self.n;
        for i in start..n {
            let row = &self.l[i * n..i * n + i];
            let mut s = v[i];
            for k in start..i {
                s -= row[k] * v[k];
            }
            v[i] = s / self.at(i, i);
        }
    }

    /// Solves `L Lᵀ x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        self.forward_solve_from(b, 0);
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.at(k, i) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
    }

    /// `bᵀ A⁻¹ b` for the incidence vector `b = e_i - e_j` (anchored ends
    /// dropped). Costs one partial forward substitution.
    pub fn edge_quadratic(&self, i: Option<usize>, j: Option<usize>) -> f64 {
        let start = match (i, j) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => return 0.0,
        };
        let mut v = vec![0.0; self.n];
        if let Some(i) = i {
            v[i] += 1.0;
        }
        if let Some(j) = j {
            v[j] -= 1.0;
        }
        self.forward_solve_from(&mut v, start);
        v[start..].iter().map(|x| x * x).sum()
    }

    /// Rank-1 update (`sign = 1`) or downdate (`sign = -1`) so that the
    /// factor represents `A + sign · v vᵀ`. `v` is consumed as workspace and
    /// must be zero before `start`.
    pub fn rank_one(&mut self, v: &mut [f64], start: usize, sign: f64) -> Result<()> {
        let n = self.n;
        for j in start..n {
            let vj = v[j];
            if vj == 0.0 {
                continue;
            }
            let ljj = self.at(j, j);
            let arg = ljj * ljj + sign * vj * vj;
            if arg <= 0.0 || !arg.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: arg });
            }
            let r = arg.sqrt();
            let c = r / ljj;
            let s = vj / ljj;
            self.l[j * n + j] = r;
            for i in (j + 1)..n {
                let lij = (self.l[i * n + j] + sign * s * v[i]) / c;
                self.l[i * n + j] = lij;
                v[i] = c * v[i] - s * lij;
            }
        }
        Ok(())
    }

    /// Reassembles `L Lᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.n;
        let mut a = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| self.at(i, k) * self.at(j, k)).sum();
                a[(i, j)] = s;
                a[(j, i)] = s;
            }
        }
        a
    }
}

/// Cholesky-based log determinant of an SPD matrix.
pub fn log_det_spd(a: &DenseMatrix) -> Result<f64> {
    Ok(Cholesky::factor(a)?.log_det())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> DenseMatrix {
        DenseMatrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 1.0]])
    }

    #[test]
    fn factor_reconstructs() {
        let a = DenseMatrix::from_rows(&[
            vec![4.0, 2.0, 0.4],
            vec![2.0, 5.0, 1.0],
            vec![0.4, 1.0, 3.0],
        ]);
        let c = Cholesky::factor(&a).unwrap();
        let r = c.reconstruct();
        for (x, y) in r.as_slice().iter().zip(a.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_log_det_is_zero() {
        // det [[2,-1],[-1,1]] = 1
        let c = Cholesky::factor(&chain()).unwrap();
        assert!(c.log_det().abs() < 1e-14);
    }

    #[test]
    fn edge_quadratic_matches_hand_inverse() {
        // inverse of the chain Laplacian is [[1,1],[1,2]]
        let c = Cholesky::factor(&chain()).unwrap();
        assert!((c.edge_quadratic(None, Some(1)) - 2.0).abs() < 1e-14);
        assert!((c.edge_quadratic(Some(0), None) - 1.0).abs() < 1e-14);
        // (1,-1) [[1,1],[1,2]] (1,-1)ᵀ = 1 - 2 + 2 = 1
        assert!((c.edge_quadratic(Some(0), Some(1)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn not_pd_is_rejected() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(
            Cholesky::factor(&a),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn update_then_downdate_round_trips() {
        let a = DenseMatrix::from_rows(&[
            vec![3.0, -1.0, 0.0],
            vec![-1.0, 2.0, -1.0],
            vec![0.0, -1.0, 2.0],
        ]);
        let base = Cholesky::factor(&a).unwrap();
        let mut c = base.clone();
        let mut v = vec![0.0, 1.5, -1.5];
        c.rank_one(&mut v, 1, 1.0).unwrap();
        let mut b = a.clone();
        b.add_edge(Some(1), Some(2), 2.25);
        let direct = Cholesky::factor(&b).unwrap();
        assert!((c.log_det() - direct.log_det()).abs() < 1e-12);
        let mut v = vec![0.0, 1.5, -1.5];
        c.rank_one(&mut v, 1, -1.0).unwrap();
        assert!((c.log_det() - base.log_det()).abs() < 1e-12);
    }

    #[test]
    fn solve_inverts() {
        let a = DenseMatrix::from_rows(&[
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ]);
        let c = Cholesky::factor(&a).unwrap();
        let mut x = vec![1.0, 2.0, 3.0];
        c.solve(&mut x);
        for i in 0..3 {
            let ax: f64 = (0..3).map(|j| a[(i, j)] * x[j]).sum();
            assert!((ax - (i + 1) as f64).abs() < 1e-12);
        }
    }
}
