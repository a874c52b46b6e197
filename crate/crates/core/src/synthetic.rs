//! Seeded random problem instances for tests, sweeps and benchmarks.

use crate::belief::{CovarianceTable, GaussianBelief, InfoMatrix, Propagation, VarId};
use crate::bounds::{CollectiveJacobian, ComponentLabel};
use crate::error::{Error, Result};
use crate::linalg::{self, SparseRow};
use crate::motion::{Action, MotionSpec};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

/// A PD propagated belief with a measurement Jacobian over it.
#[derive(Debug, Clone)]
pub struct GaussianInstance {
    pub prop: GaussianBelief,
    pub jacobian: CollectiveJacobian,
}

/// Pose/landmark layout whose block sizes sum to `n` (`n ≥ 2`).
pub fn layout(n: usize) -> Result<Vec<VarId>> {
    if n < 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: n });
    }
    let mut poses = n / 10;
    if (n - 3 * poses) % 2 == 1 {
        poses += 1;
    }
    if 3 * poses > n {
        poses -= 2;
    }
    let landmarks = (n - 3 * poses) / 2;
    Ok((0..poses).map(VarId::Pose).chain((0..landmarks).map(VarId::Landmark)).collect())
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Dense random PD information over `n` dims and `r` sparse rows grouped into `m` components.
pub fn random_instance(rng: &mut impl Rng, n: usize, r: usize, m: usize) -> Result<GaussianInstance> {
    if m == 0 && r > 0 || m > r {
        return Err(Error::InvalidCover(format!("{m} components over {r} rows")));
    }
    let vars = layout(n)?;
    let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let mut info = &g * g.transpose() / n as f64;
    for i in 0..n {
        info[(i, i)] += 0.5;
    }
    let info = (&info + info.transpose()) * 0.5;
    let prop = GaussianBelief::new(InfoMatrix::new(info)?, DVector::zeros(n), &vars)?;
    let density = rng.gen_range(0.1..0.6);
    let rows = DMatrix::from_fn(r, n, |_, _| {
        if rng.gen_bool(density) {
            gaussian(rng)
        } else {
            0.0
        }
    });
    let mut rows = rows;
    for i in 0..r {
        if rows.row(i).iter().all(|&v| v == 0.0) {
            let c = rng.gen_range(0..n);
            rows[(i, c)] = gaussian(rng);
        }
    }
    let mut groups: Vec<usize> = (0..m).chain((m..r).map(|_| rng.gen_range(0..m))).collect();
    groups.shuffle(rng);
    let jacobian = CollectiveJacobian::new(rows, groups, m, n)?;
    Ok(GaussianInstance { prop, jacobian })
}

/// A sparse SLAM-shaped prior, its propagation over a horizon and random
/// two-row measurement components between future poses and mapped landmarks.
#[derive(Debug, Clone)]
pub struct SlamInstance {
    pub prior: GaussianBelief,
    pub prior_logdet: f64,
    /// Covariance of the current pose and every involved landmark under the prior.
    pub prior_cov: CovarianceTable,
    pub propagation: Propagation,
    pub jacobian: CollectiveJacobian,
    pub involved: Vec<VarId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlamShape {
    pub poses: usize,
    pub landmarks: usize,
    pub horizon: usize,
    pub measurements: usize,
}

impl SlamShape {
    /// Prior dimension `3·poses + 2·landmarks`.
    pub fn prior_dim(&self) -> usize {
        3 * self.poses + 2 * self.landmarks
    }
}

pub fn slam_prior(rng: &mut impl Rng, poses: usize, landmarks: usize) -> Result<GaussianBelief> {
    if poses == 0 {
        return Err(Error::MissingPose);
    }
    let vars: Vec<VarId> = (0..poses).map(VarId::Pose).chain((0..landmarks).map(VarId::Landmark)).collect();
    let n = 3 * poses + 2 * landmarks;
    let pose_col = |k: usize| 3 * k;
    let lm_col = |j: usize| 3 * poses + 2 * j;
    let mut rows: Vec<SparseRow> = Vec::new();
    for c in 0..3 {
        rows.push(SparseRow {
            cols: vec![c],
            vals: vec![10.0],
        });
    }
    for k in 1..poses {
        for r in 0..3 {
            let mut row = SparseRow::default();
            for c in 0..3 {
                let f = if r == c { 1.0 } else { 0.0 } + 0.1 * gaussian(rng);
                row.cols.push(pose_col(k - 1) + c);
                row.vals.push(-f);
            }
            row.cols.push(pose_col(k) + r);
            row.vals.push(1.0);
            rows.push(row);
        }
    }
    for j in 0..landmarks {
        let seen = 1 + rng.gen_range(0..3);
        for _ in 0..seen {
            let k = rng.gen_range(0..poses);
            for _ in 0..2 {
                let mut row = SparseRow::default();
                for c in 0..3 {
                    row.cols.push(pose_col(k) + c);
                    row.vals.push(gaussian(rng));
                }
                for c in 0..2 {
                    row.cols.push(lm_col(j) + c);
                    row.vals.push(gaussian(rng) + if c == 0 { 2.0 } else { 0.0 });
                }
                rows.push(row);
            }
        }
    }
    let mut info = DMatrix::zeros(n, n);
    linalg::add_gram(&mut info, &rows);
    let mean = DVector::from_fn(n, |_, _| rng.gen_range(-10.0..10.0));
    GaussianBelief::new(InfoMatrix::new(info)?, mean, &vars)
}

/// Random SLAM-structured instance. Measurements hit landmarks drawn from `landmark_pool`
/// (all landmarks when `None`) so the number of involved variables can be controlled.
pub fn slam_instance(rng: &mut impl Rng, shape: SlamShape, landmark_pool: Option<usize>) -> Result<SlamInstance> {
    let prior = slam_prior(rng, shape.poses, shape.landmarks)?;
    let motion = MotionSpec::odometry(0.2, 0.05);
    let actions: Vec<Action> = (0..shape.horizon)
        .map(|_| Action::new(rng.gen_range(0.5..2.0), rng.gen_range(-0.3..0.3), rng.gen_range(-0.5..0.5)))
        .collect();
    let propagation = prior.propagate_detailed(&actions, &motion)?;
    let n = propagation.dim();
    let current = prior.latest_pose().ok_or(Error::MissingPose)?.id;
    let pool = landmark_pool.unwrap_or(shape.landmarks).min(shape.landmarks);
    if shape.measurements > 0 && pool == 0 {
        return Err(Error::InfeasibleConfig("measurements need landmarks".into()));
    }
    let mut pool_ids: Vec<usize> = (0..shape.landmarks).collect();
    pool_ids.shuffle(rng);
    pool_ids.truncate(pool);

    let m = shape.measurements;
    let mut rows = DMatrix::zeros(2 * m, n);
    let mut groups = Vec::with_capacity(2 * m);
    let mut labels = Vec::with_capacity(m);
    for c in 0..m {
        let step = if shape.horizon == 0 { None } else { Some(rng.gen_range(0..shape.horizon)) };
        let pose = match step {
            Some(s) => propagation.steps[s].to,
            None => current,
        };
        let lm = VarId::Landmark(pool_ids[rng.gen_range(0..pool)]);
        let po = propagation.require(pose)?.offset;
        let lo = propagation.require(lm)?.offset;
        for r in 0..2 {
            for k in 0..3 {
                rows[(2 * c + r, po + k)] = gaussian(rng);
            }
            for k in 0..2 {
                rows[(2 * c + r, lo + k)] = gaussian(rng);
            }
            groups.push(c);
        }
        labels.push(ComponentLabel {
            step: step.unwrap_or(0),
            pose,
            landmark: lm,
        });
    }
    let jacobian = CollectiveJacobian::new(rows, groups, m, n)?.with_labels(labels.clone())?;
    let mut involved: Vec<VarId> = labels.iter().map(|l| l.landmark).collect();
    if shape.horizon == 0 && m > 0 {
        involved.push(current);
    }
    involved.sort_unstable();
    involved.dedup();
    let mut cov_vars = vec![current];
    cov_vars.extend(involved.iter().copied().filter(|&v| v != current));
    let factored = prior.factorize()?;
    let prior_logdet = factored.logdet();
    let prior_cov = factored.covariance_entries(&cov_vars)?;
    Ok(SlamInstance {
        prior,
        prior_logdet,
        prior_cov,
        propagation,
        jacobian,
        involved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layouts_cover_dimension() {
        for n in 2..300 {
            let vars = layout(n).unwrap();
            let total: usize = vars.iter().map(|v| v.kind().dim()).sum();
            assert_eq!(total, n);
        }
        assert!(layout(1).is_err());
    }

    #[test]
    fn instances_are_pd_and_seeded() {
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(1);
        let x = random_instance(&mut a, 30, 10, 4).unwrap();
        let y = random_instance(&mut b, 30, 10, 4).unwrap();
        assert_eq!(x.jacobian.rows(), y.jacobian.rows());
        assert!(x.prop.entropy().is_ok());
        let s = slam_instance(
            &mut a,
            SlamShape {
                poses: 5,
                landmarks: 8,
                horizon: 3,
                measurements: 6,
            },
            None,
        )
        .unwrap();
        assert!(s.propagation.entropy().is_ok());
        assert_eq!(s.jacobian.n_rows(), 12);
    }
}
