//! Minimal dense linear algebra for the small (p ≤ ~20) systems that show up
//! in Newton steps and sandwich variances.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn diag(&self) -> Vec<F> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// In-place `self += alpha * v vᵀ`.
    pub fn add_outer(&mut self, v: &[F], alpha: F) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for i in 0..self.rows {
            let vi = alpha * v[i];
            for j in 0..self.cols {
                self[(i, j)] += vi * v[j];
            }
        }
    }

    pub fn add_scaled(&mut self, other: &Matrix<F>, alpha: F) {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += alpha * *b;
        }
    }

    pub fn scale(&mut self, alpha: F) {
        for a in self.data.iter_mut() {
            *a *= alpha;
        }
    }

    pub fn matmul(&self, other: &Matrix<F>) -> Matrix<F> {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == F::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                let mut s = F::zero();
                for j in 0..self.cols {
                    s += self[(i, j)] * v[j];
                }
                s
            })
            .collect()
    }

    /// Force exact symmetry by averaging mirrored entries.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        let half = F::from_f64_lossy(0.5);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    pub fn max_abs(&self) -> F {
        self.data
            .iter()
            .fold(F::zero(), |acc, &v| acc.max(v.abs()))
    }

    /// Cholesky factor of a symmetric positive-definite matrix.
    ///
    /// Fails with the first non-positive pivot index, which callers map to the
    /// offending design term.
    pub fn cholesky(&self) -> std::result::Result<Matrix<F>, usize> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= F::zero() || !d.is_finite() {
                return Err(j);
            }
            let dj = d.sqrt();
            l[(j, j)] = dj;
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / dj;
            }
        }
        Ok(l)
    }

    /// Solve `self * x = b` for SPD `self` via Cholesky.
    pub fn solve_spd(&self, b: &[F], term_name: impl Fn(usize) -> String) -> Result<Vec<F>> {
        let l = self
            .cholesky()
            .map_err(|j| Error::SingularDesign { term: term_name(j) })?;
        Ok(l.chol_solve(b))
    }

    /// Inverse of an SPD matrix via Cholesky.
    pub fn inverse_spd(&self, term_name: impl Fn(usize) -> String) -> Result<Matrix<F>> {
        let n = self.rows;
        let l = self
            .cholesky()
            .map_err(|j| Error::SingularDesign { term: term_name(j) })?;
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![F::zero(); n];
        for j in 0..n {
            e[j] = F::one();
            let col = l.chol_solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
            e[j] = F::zero();
        }
        inv.symmetrize();
        Ok(inv)
    }

    /// Given the Cholesky factor L (self), solve L Lᵀ x = b.
    fn chol_solve(&self, b: &[F]) -> Vec<F> {
        let n = self.rows;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let lik = self[(i, k)];
                y[i] = y[i] - lik * y[k];
            }
            y[i] /= self[(i, i)];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let lki = self[(k, i)];
                y[i] = y[i] - lki * y[k];
            }
            y[i] /= self[(i, i)];
        }
        y
    }

    /// Whether the matrix is symmetric PSD, judged by Cholesky of `self + eps I`.
    pub fn is_symmetric_psd(&self, eps: F) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in 0..i {
                if (self[(i, j)] - self[(j, i)]).abs()
                    > eps * (F::one() + self[(i, j)].abs().max(self[(j, i)].abs()))
                {
                    return false;
                }
            }
        }
        let mut shifted = self.clone();
        for i in 0..self.rows {
            shifted[(i, i)] += eps;
        }
        shifted.cholesky().is_ok()
    }
}

impl<F: Scalar> std::ops::Index<(usize, usize)> for Matrix<F> {
    type Output = F;
    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.cols + j]
    }
}

impl<F: Scalar> std::ops::IndexMut<(usize, usize)> for Matrix<F> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[i * self.cols + j]
    }
}

/// `a + b` elementwise for vectors.
pub fn vec_add<F: Scalar>(a: &[F], b: &[F]) -> Vec<F> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

/// `a += alpha * b` elementwise.
pub fn vec_axpy<F: Scalar>(a: &mut [F], alpha: F, b: &[F]) {
    for (x, &y) in a.iter_mut().zip(b) {
        *x += alpha * y;
    }
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut s = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub fn max_abs<F: Scalar>(v: &[F]) -> F {
    v.iter().fold(F::zero(), |acc, &x| acc.max(x.abs()))
}
