//! Posterior log-determinants through the augmented matrix determinant lemma.
//!
//! For a prior `Λ` padded with zero columns for new variables and a stacked
//! Jacobian `A = [A_old, A_new]`:
//!
//! ```text
//! |Λ + AᵀA| = |Λ| · |Δ| · |A_newᵀ Δ⁻¹ A_new|,   Δ = I + A_old Σ A_oldᵀ
//! ```
//!
//! Only the covariance entries of old variables touched by `A_old` are read, so
//! the per-evaluation cost is cubic in the number of rows, not the state size.

use crate::belief::{CovarianceTable, Propagation, VarId, VariableIndex};
use crate::error::{Error, Result};
use crate::linalg::{sparse_rows, Cholesky, SparseRow};
use nalgebra::DMatrix;

/// `ln |Λ + AᵀA|` for a dense `A` whose columns `n_old..` are new (zero prior information).
pub fn ramdl_logdet(prior_logdet: f64, cov: &CovarianceTable, a: &DMatrix<f64>, n_old: usize) -> Result<f64> {
    let rows = sparse_rows(a);
    let refs: Vec<&SparseRow> = rows.iter().collect();
    ramdl_logdet_rows(prior_logdet, cov, &refs, n_old, a.ncols())
}

pub(crate) fn ramdl_logdet_rows(
    prior_logdet: f64,
    cov: &CovarianceTable,
    rows: &[&SparseRow],
    n_old: usize,
    n_total: usize,
) -> Result<f64> {
    let n_new = n_total.saturating_sub(n_old);
    let r = rows.len();
    if r == 0 {
        return if n_new > 0 {
            Err(Error::RankDeficientNew)
        } else {
            Ok(prior_logdet)
        };
    }
    if n_new > r {
        return Err(Error::RankDeficientNew);
    }

    // old part in local covariance coordinates
    let mut old: Vec<Vec<(usize, f64)>> = Vec::with_capacity(r);
    let mut a_new = DMatrix::<f64>::zeros(r, n_new);
    for (i, row) in rows.iter().enumerate() {
        let mut entries = Vec::with_capacity(row.cols.len());
        for (c, v) in row.iter() {
            if c >= n_total {
                return Err(Error::DimensionMismatch {
                    expected: n_total,
                    found: c + 1,
                });
            }
            if c >= n_old {
                a_new[(i, c - n_old)] = v;
            } else {
                let local = cov.local(c).ok_or(Error::MissingCovarianceEntries(c))?;
                entries.push((local, v));
            }
        }
        old.push(entries);
    }

    let delta = delta_matrix(cov, &old);
    let chol = Cholesky::factor(&delta)?;
    let mut logdet = prior_logdet + chol.logdet();

    if n_new > 0 {
        chol.forward_solve_in_place(&mut a_new);
        let gram = a_new.tr_mul(&a_new);
        let inner = Cholesky::factor(&gram).map_err(|_| Error::RankDeficientNew)?;
        logdet += inner.logdet();
    }
    Ok(logdet)
}

/// `Δ = I + A_old Σ A_oldᵀ` from sparse rows in local coordinates.
fn delta_matrix(cov: &CovarianceTable, old: &[Vec<(usize, f64)>]) -> DMatrix<f64> {
    let r = old.len();
    let k = cov.dim();
    let sigma = cov.matrix().as_slice();
    let mut delta = DMatrix::<f64>::identity(r, r);
    let mut projected = vec![0.0; k];
    for (a, row_a) in old.iter().enumerate() {
        if row_a.is_empty() {
            continue;
        }
        // Σ a_aᵀ
        projected.iter_mut().for_each(|p| *p = 0.0);
        for &(j, v) in row_a {
            for (p, &s) in projected.iter_mut().zip(&sigma[j * k..(j + 1) * k]) {
                *p += s * v;
            }
        }
        for (b, row_b) in old.iter().enumerate().take(a + 1) {
            let dot: f64 = row_b.iter().map(|&(j, v)| projected[j] * v).sum();
            delta[(a, b)] += dot;
            if a != b {
                delta[(b, a)] += dot;
            }
        }
    }
    delta
}

/// Per-candidate context for evaluating `|Λ^{Aug−} + A_sᵀA_s|` by the determinant lemma.
///
/// Holds `ln |Λ^{Aug−}|` and the covariance of `Λ^{Aug−}` restricted to the
/// involved old variables plus every new pose. Relative to `Λ^{Aug−}` all
/// measurement columns are old, so node evaluations reduce to `|Δ_s|`.
#[derive(Debug, Clone)]
pub struct RamdlPrior {
    logdet: f64,
    cov: CovarianceTable,
    dim: usize,
}

impl RamdlPrior {
    /// `prior_logdet` and `prior_cov` describe the planning-time belief `Λ_k`;
    /// `prior_cov` must hold the current pose and every variable in `involved`.
    pub fn from_propagation(
        prior_logdet: f64,
        prior_cov: &CovarianceTable,
        propagation: &Propagation,
        involved: &[VarId],
    ) -> Result<Self> {
        let belief = &propagation.belief;
        let n = belief.dim();
        let motion: Vec<&SparseRow> = propagation.motion_rows.iter().collect();
        let logdet = ramdl_logdet_rows(prior_logdet, prior_cov, &motion, propagation.prior_dim, n)?;

        let mut old_vars: Vec<VarId> = Vec::new();
        if let Some(first) = propagation.steps.first() {
            old_vars.push(first.from);
        }
        for &id in involved {
            if !old_vars.contains(&id) {
                old_vars.push(id);
            }
        }
        let mut vars: Vec<VariableIndex> = Vec::new();
        for &id in &old_vars {
            let v = *belief.require(id)?;
            if !prior_cov.contains(id) {
                return Err(Error::MissingCovarianceEntries(v.offset));
            }
            vars.push(v);
        }
        let k_old: usize = vars.iter().map(|v| v.dim).sum();
        let k = k_old + 3 * propagation.steps.len();
        let mut c = DMatrix::<f64>::zeros(k, k);

        // old block copied from the one-time table
        let locals: Vec<usize> = vars
            .iter()
            .flat_map(|v| v.cols())
            .map(|g| prior_cov.local(g).expect("checked membership"))
            .collect();
        for (j, &lj) in locals.iter().enumerate() {
            for (i, &li) in locals.iter().enumerate() {
                c[(i, j)] = prior_cov.matrix()[(li, lj)];
            }
        }

        // forward propagation x_q = F x_p + w
        let mut off = k_old;
        for step in &propagation.steps {
            let to = *belief.require(step.to)?;
            let from_local = {
                let pos = vars.iter().position(|v| v.id == step.from).expect("chain is contiguous");
                vars[..pos].iter().map(|v| v.dim).sum::<usize>()
            };
            let f = step.jacobian;
            for col in 0..off {
                for r in 0..3 {
                    let mut acc = 0.0;
                    for s in 0..3 {
                        acc += f[(r, s)] * c[(from_local + s, col)];
                    }
                    c[(off + r, col)] = acc;
                    c[(col, off + r)] = acc;
                }
            }
            let pp = c.view((from_local, from_local), (3, 3)).into_owned();
            let fm = DMatrix::from_fn(3, 3, |i, j| f[(i, j)]);
            let w = DMatrix::from_fn(3, 3, |i, j| step.noise[(i, j)]);
            let qq = &fm * pp * fm.transpose() + w;
            c.view_mut((off, off), (3, 3)).copy_from(&qq);
            vars.push(to);
            off += 3;
        }

        Ok(Self {
            logdet,
            cov: CovarianceTable::new(vars, c),
            dim: n,
        })
    }

    /// `ln |Λ^{Aug−}|`.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn covariance(&self) -> &CovarianceTable {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `ln |Λ^{Aug−} + Σ rᵀr|` over the given measurement rows.
    pub fn posterior_logdet(&self, rows: &[&SparseRow]) -> Result<f64> {
        ramdl_logdet_rows(self.logdet, &self.cov, rows, self.dim, self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{GaussianBelief, InfoMatrix};
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn table(vars: &[VariableIndex], m: DMatrix<f64>) -> CovarianceTable {
        CovarianceTable::new(vars.to_vec(), m)
    }

    #[test]
    fn all_old_single_row() {
        // Λ = I₂, A = [1 0] → Δ = [2]
        let vars = [VariableIndex::new(VarId::Landmark(0), 0)];
        let cov = table(&vars, DMatrix::identity(2, 2));
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let ld = ramdl_logdet(0.0, &cov, &a, 2).unwrap();
        assert_relative_eq!(ld, 2f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn pure_new_measurement() {
        // Λ_old = [1], one new dimension, A = [0 1]
        let cov = CovarianceTable::empty();
        let a = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let ld = ramdl_logdet(0.0, &cov, &a, 1).unwrap();
        assert_relative_eq!(ld, 0.0, epsilon = 1e-14);
        let dense = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]) + a.tr_mul(&a);
        assert_relative_eq!(dense.determinant(), 1.0);
    }

    #[test]
    fn missing_entries_and_rank_deficiency() {
        let cov = CovarianceTable::empty();
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        assert_eq!(ramdl_logdet(0.0, &cov, &a, 2), Err(Error::MissingCovarianceEntries(0)));
        let a = DMatrix::from_row_slice(1, 4, &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(ramdl_logdet(0.0, &cov, &a, 2), Err(Error::RankDeficientNew));
        let a = DMatrix::from_row_slice(2, 4, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
        assert_eq!(ramdl_logdet(0.0, &cov, &a, 2), Err(Error::RankDeficientNew));
    }

    #[test]
    fn general_form_matches_dense() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n_old = 6;
        let g = DMatrix::from_fn(n_old, n_old, |_, _| rng.gen_range(-1.0..1.0));
        let lambda = &g * g.transpose() + DMatrix::identity(n_old, n_old);
        let belief = GaussianBelief::new(
            InfoMatrix::new(lambda.clone()).unwrap(),
            DVector::zeros(n_old),
            &[VarId::Pose(0), VarId::Pose(1)],
        )
        .unwrap();
        let cov = belief
            .recover_covariance_entries(&[VarId::Pose(0), VarId::Pose(1)])
            .unwrap();
        let n = n_old + 3;
        let a = DMatrix::from_fn(7, n, |_, _| rng.gen_range(-1.0..1.0));
        let ld = ramdl_logdet(lambda.determinant().ln(), &cov, &a, n_old).unwrap();
        let mut full = DMatrix::zeros(n, n);
        full.view_mut((0, 0), (n_old, n_old)).copy_from(&lambda);
        full += a.tr_mul(&a);
        assert_relative_eq!(ld, full.determinant().ln(), max_relative = 1e-10);
    }
}
