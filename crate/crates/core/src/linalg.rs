//! Dense symmetric factorization kernels.
//!
//! The Cholesky factor is computed column by column (left-looking) on dense
//! column-major storage. Updates whose multiplier is an exact zero are skipped,
//! so the work tracks the fill-in of the factor rather than the full `n³/3`.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Factorizes the lower triangle of `a`. The strict upper triangle is ignored.
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        let n = a.nrows();
        let mut l = DMatrix::<f64>::zeros(n, n);
        let mut work = vec![0.0; n];
        for j in 0..n {
            let col = &mut work[..n - j];
            for (w, i) in col.iter_mut().zip(j..n) {
                *w = a[(i, j)];
            }
            for k in 0..j {
                let ljk = l[(j, k)];
                if ljk == 0.0 {
                    continue;
                }
                let lk = &l.as_slice()[k * n + j..(k + 1) * n];
                for (w, &lik) in col.iter_mut().zip(lk) {
                    *w -= lik * ljk;
                }
            }
            let d = col[0];
            if d.is_nan() || d <= 0.0 || d.is_infinite() {
                return Err(Error::NotPositiveDefinite("cholesky pivot"));
            }
            let ljj = d.sqrt();
            let lj = &mut l.as_mut_slice()[j * n + j..(j + 1) * n];
            lj[0] = ljj;
            for (dst, &w) in lj.iter_mut().zip(col.iter()).skip(1) {
                *dst = w / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor_matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `ln |A| = 2 Σ ln L_ii`.
    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }

    /// Solves `L y = b` in place for every column of `b`.
    pub fn forward_solve_in_place(&self, b: &mut DMatrix<f64>) {
        let n = self.dim();
        assert_eq!(b.nrows(), n);
        let l = self.l.as_slice();
        for mut col in b.column_iter_mut() {
            let y = col.as_mut_slice();
            for j in 0..n {
                if y[j] == 0.0 {
                    continue;
                }
                let lj = &l[j * n..(j + 1) * n];
                y[j] /= lj[j];
                let yj = y[j];
                for i in j + 1..n {
                    y[i] -= lj[i] * yj;
                }
            }
        }
    }

    /// Solves `Lᵀ x = y` in place for every column.
    pub fn backward_solve_in_place(&self, y: &mut DMatrix<f64>) {
        let n = self.dim();
        assert_eq!(y.nrows(), n);
        let l = self.l.as_slice();
        for mut col in y.column_iter_mut() {
            let x = col.as_mut_slice();
            for j in (0..n).rev() {
                let lj = &l[j * n..(j + 1) * n];
                let mut acc = x[j];
                for i in j + 1..n {
                    acc -= lj[i] * x[i];
                }
                x[j] = acc / lj[j];
            }
        }
    }

    /// Solves `A x = b` for every column of `b`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.forward_solve_in_place(&mut x);
        self.backward_solve_in_place(&mut x);
        x
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        let x = self.solve(&m);
        DVector::from_column_slice(x.as_slice())
    }
}

/// A matrix row stored as its nonzero `(column, value)` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRow {
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseRow {
    pub fn from_dense(row: impl IntoIterator<Item = f64>) -> Self {
        let mut out = Self::default();
        for (c, v) in row.into_iter().enumerate() {
            if v != 0.0 {
                out.cols.push(c);
                out.vals.push(v);
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.cols.iter().copied().zip(self.vals.iter().copied())
    }
}

/// Adds `rᵀ r` for every row into the symmetric matrix `m`, keeping exact symmetry.
pub fn add_gram(m: &mut DMatrix<f64>, rows: &[SparseRow]) {
    for row in rows {
        for (a, va) in row.iter() {
            for (b, vb) in row.iter() {
                m[(a, b)] += va * vb;
            }
        }
    }
}

/// Sparse view of every row of a dense matrix.
pub fn sparse_rows(a: &DMatrix<f64>) -> Vec<SparseRow> {
    a.row_iter()
        .map(|r| SparseRow::from_dense(r.iter().copied()))
        .collect()
}

/// Log-determinant of a symmetric positive definite matrix.
pub fn logdet_spd(a: &DMatrix<f64>) -> Result<f64> {
    Ok(Cholesky::factor(a)?.logdet())
}

/// Maximum relative asymmetry `max |a_ij − a_ji| / max |a|`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in j + 1..a.nrows() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}
