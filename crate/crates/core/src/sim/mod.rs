//! Planar active-SLAM scenarios: worlds, prior mapping, range-bearing
//! measurements, roadmap candidate paths and collective-Jacobian assembly.

mod mapping;
mod prm;
mod sensor;
mod world;

pub use mapping::{prior_mapping, Mapper, MappingOptions, PriorMap};
pub use prm::{build_roadmap, default_radius, prm_generate, CandidatePath, PrmConfig, Roadmap};
pub use sensor::SensorSpec;
pub use world::{generate_world, segments_intersect, Point, Polygon, Rect, World, WorldConfig};

use crate::belief::{GaussianBelief, Propagation, VarId};
use crate::bounds::{CollectiveJacobian, ComponentLabel};
use crate::error::{Error, Result};
use crate::motion::{MotionSpec, Pose2};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Landmarks observed at each look-ahead step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataAssociation {
    pub per_step: Vec<Vec<VarId>>,
}

impl DataAssociation {
    pub fn measurement_count(&self) -> usize {
        self.per_step.iter().map(Vec::len).sum()
    }

    /// Distinct landmarks observed anywhere in the horizon, sorted.
    pub fn involved(&self) -> Vec<VarId> {
        let mut ids: Vec<VarId> = self.per_step.iter().flatten().copied().collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Most-likely poses along `path`, one per action, starting from the latest pose mean.
pub fn predicted_poses(belief: &GaussianBelief, path: &CandidatePath, motion: &MotionSpec) -> Result<Vec<Pose2>> {
    let start = belief.latest_pose().ok_or(Error::MissingPose)?;
    let mut pose = belief.pose(start.id).expect("latest pose exists");
    Ok(path
        .actions
        .iter()
        .map(|a| {
            pose = motion.model.predict(pose, a);
            pose
        })
        .collect())
}

/// Mapped landmarks in range and field of view of each predicted pose.
pub fn predict_associations(
    belief: &GaussianBelief,
    path: &CandidatePath,
    sensor: &SensorSpec,
    motion: &MotionSpec,
) -> Result<DataAssociation> {
    let poses = predicted_poses(belief, path, motion)?;
    let landmarks: Vec<(VarId, [f64; 2])> = belief
        .landmarks()
        .map(|v| (v.id, [belief.mean()[v.offset], belief.mean()[v.offset + 1]]))
        .collect();
    let per_step = poses
        .iter()
        .map(|&p| {
            let mut ids: Vec<VarId> = landmarks.iter().filter(|(_, l)| sensor.sees(p, *l)).map(|(id, _)| *id).collect();
            ids.sort_unstable();
            ids
        })
        .collect();
    Ok(DataAssociation { per_step })
}

/// Propagates the belief along `path` and stacks the whitened range-bearing rows
/// of every associated measurement, linearized at the predicted means.
///
/// Each (step, landmark) pair is one measurement component of two rows.
pub fn build_collective_jacobian(
    belief: &GaussianBelief,
    path: &CandidatePath,
    assoc: &DataAssociation,
    motion: &MotionSpec,
    sensor: &SensorSpec,
) -> Result<(Propagation, CollectiveJacobian)> {
    if assoc.per_step.len() != path.actions.len() {
        return Err(Error::DimensionMismatch {
            expected: path.actions.len(),
            found: assoc.per_step.len(),
        });
    }
    let prop = belief.propagate_detailed(&path.actions, motion)?;
    let whiten = sensor.whitener()?;
    let n = prop.dim();
    let m = assoc.measurement_count();
    let mut rows = DMatrix::zeros(2 * m, n);
    let mut groups = Vec::with_capacity(2 * m);
    let mut labels = Vec::with_capacity(m);
    for (step, ids) in assoc.per_step.iter().enumerate() {
        let pose_id = prop.steps[step].to;
        let pv = *prop.require(pose_id)?;
        let pose = prop.pose(pose_id).expect("propagated pose");
        for &lm in ids {
            if !matches!(lm, VarId::Landmark(_)) {
                return Err(Error::InconsistentAssociation(format!("{lm:?} is not a landmark")));
            }
            let lv = *belief.require(lm)?;
            let l = [prop.mean()[lv.offset], prop.mean()[lv.offset + 1]];
            if pose.distance_to(l) <= 1e-9 {
                return Err(Error::InconsistentAssociation(format!(
                    "{lm:?} coincides with predicted pose {pose_id:?}"
                )));
            }
            let (hx, hl) = sensor.jacobian(pose, l);
            let wx = whiten * hx;
            let wl = whiten * hl;
            let c = labels.len();
            for r in 0..2 {
                let row = 2 * c + r;
                for k in 0..3 {
                    rows[(row, pv.offset + k)] = wx[(r, k)];
                }
                for k in 0..2 {
                    rows[(row, lv.offset + k)] = wl[(r, k)];
                }
                groups.push(c);
            }
            labels.push(ComponentLabel {
                step,
                pose: pose_id,
                landmark: lm,
            });
        }
    }
    let a = CollectiveJacobian::new(rows, groups, m, n)?.with_labels(labels)?;
    Ok((prop, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{gaussian_entropy, InfoMatrix};
    use crate::bounds::conditional_entropy_exact;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use std::f64::consts::TAU;

    struct Scene {
        world: World,
        map: PriorMap,
        motion: MotionSpec,
        sensor: SensorSpec,
    }

    fn scene(seed: u64) -> Scene {
        let world = generate_world(
            &WorldConfig {
                width: 40.0,
                height: 40.0,
                landmarks: 40,
                obstacles: vec![],
                seed: 0,
            },
            seed,
        )
        .unwrap();
        let motion = MotionSpec::odometry(0.1, 0.01);
        let sensor = SensorSpec::new(6.0, TAU, 0.1, 0.01);
        let traj: Vec<[f64; 2]> = (1..=8).map(|k| [2.0 + 2.0 * k as f64, 20.0]).collect();
        let map = prior_mapping(&world, Pose2::new(2.0, 20.0, 0.0), &traj, &motion, &sensor, &Default::default(), seed)
            .unwrap();
        Scene {
            world,
            map,
            motion,
            sensor,
        }
    }

    fn path_through(s: &Scene, targets: &[[f64; 2]]) -> CandidatePath {
        let start = s.map.mapper.estimated_pose();
        let mut wps = vec![start.position()];
        wps.extend_from_slice(targets);
        CandidatePath::from_waypoints(0, start, wps)
    }

    /// Posterior built from scratch: linearize every measurement and add it to a
    /// fresh copy of the propagated information matrix.
    fn dense_rebuild(s: &Scene, path: &CandidatePath, assoc: &DataAssociation) -> f64 {
        let b = &s.map.belief;
        let prop = b.propagate(&path.actions, &s.motion).unwrap();
        let mut info = prop.info().as_matrix().clone();
        let v = s.sensor.noise.try_inverse().unwrap();
        let first = b.latest_pose().unwrap().id;
        let VarId::Pose(k0) = first else { unreachable!() };
        for (step, ids) in assoc.per_step.iter().enumerate() {
            let pid = VarId::Pose(k0 + 1 + step);
            let pose = prop.pose(pid).unwrap();
            let po = prop.variable(pid).unwrap().offset;
            for &lm in ids {
                let lo = prop.variable(lm).unwrap().offset;
                let l = [prop.mean()[lo], prop.mean()[lo + 1]];
                let (hx, hl) = s.sensor.jacobian(pose, l);
                let mut h = DMatrix::zeros(2, prop.dim());
                h.view_mut((0, po), (2, 3)).copy_from(&hx);
                h.view_mut((0, lo), (2, 2)).copy_from(&hl);
                info += h.transpose() * DMatrix::from_fn(2, 2, |i, j| v[(i, j)]) * h;
            }
        }
        info.lu().determinant().ln()
    }

    #[test]
    fn far_path_has_empty_association() {
        let s = scene(1);
        let b = &s.map.belief;
        // a path far outside the mapped strip
        let mut sensor = s.sensor;
        sensor.max_range = 0.5;
        let p = path_through(&s, &[[18.0, 30.0], [18.0, 38.0]]);
        let a = predict_associations(b, &p, &sensor, &s.motion).unwrap();
        assert!(a.per_step.iter().all(Vec::is_empty));
        let (prop, jac) = build_collective_jacobian(b, &p, &a, &s.motion, &sensor).unwrap();
        assert_eq!(jac.n_rows(), 0);
        let h = conditional_entropy_exact(&prop, &jac).unwrap();
        assert_relative_eq!(h, prop.entropy().unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn zero_range_is_empty() {
        let s = scene(2);
        let mut sensor = s.sensor;
        sensor.max_range = 0.0;
        let p = path_through(&s, &[[10.0, 20.0], [14.0, 20.0]]);
        let a = predict_associations(&s.map.belief, &p, &sensor, &s.motion).unwrap();
        assert_eq!(a.measurement_count(), 0);
    }

    #[test]
    fn single_measurement_has_two_rows() {
        let lm_pos = [10.0, 12.0];
        let info = DMatrix::identity(5, 5);
        let b = GaussianBelief::new(
            InfoMatrix::new(info).unwrap(),
            DVector::from_vec(vec![10.0, 10.0, 0.0, lm_pos[0], lm_pos[1]]),
            &[VarId::Pose(0), VarId::Landmark(3)],
        )
        .unwrap();
        let p = CandidatePath::from_waypoints(0, Pose2::new(10.0, 10.0, 0.0), vec![[10.0, 10.0], [11.0, 10.0]]);
        let sensor = SensorSpec::new(5.0, TAU, 0.1, 0.01);
        let motion = MotionSpec::odometry(0.1, 0.01);
        let a = predict_associations(&b, &p, &sensor, &motion).unwrap();
        assert_eq!(a.per_step, vec![vec![VarId::Landmark(3)]]);
        let (prop, jac) = build_collective_jacobian(&b, &p, &a, &motion, &sensor).unwrap();
        assert_eq!(jac.n_rows(), 2);
        assert_eq!(jac.n_components(), 1);
        assert_eq!(jac.n_cols(), prop.dim());
        assert_eq!(prop.dim(), 8);
    }

    #[test]
    fn matches_dense_rebuild() {
        for seed in 0..5 {
            let s = scene(seed);
            let p = path_through(&s, &[[10.0, 21.0], [13.0, 19.0], [16.0, 20.0], [19.0, 22.0]]);
            let a = predict_associations(&s.map.belief, &p, &s.sensor, &s.motion).unwrap();
            assert!(a.measurement_count() > 0);
            let (prop, jac) = build_collective_jacobian(&s.map.belief, &p, &a, &s.motion, &s.sensor).unwrap();
            let h = conditional_entropy_exact(&prop, &jac).unwrap();
            let oracle = gaussian_entropy(prop.dim(), dense_rebuild(&s, &p, &a));
            assert_relative_eq!(h, oracle, max_relative = 1e-9);
        }
    }

    #[test]
    fn association_monotone_in_range() {
        let s = scene(3);
        let p = path_through(&s, &[[10.0, 23.0], [15.0, 25.0], [20.0, 22.0]]);
        let mut prev: Option<DataAssociation> = None;
        for r in [0.0, 2.0, 4.0, 6.0, 10.0, 40.0] {
            let mut sensor = s.sensor;
            sensor.max_range = r;
            let a = predict_associations(&s.map.belief, &p, &sensor, &s.motion).unwrap();
            if let Some(prev) = prev {
                for (small, big) in prev.per_step.iter().zip(&a.per_step) {
                    assert!(small.iter().all(|id| big.contains(id)));
                }
            }
            prev = Some(a);
        }
        assert!(s.world.landmarks.len() >= prev.unwrap().involved().len());
    }

    #[test]
    fn length_mismatch_rejected() {
        let s = scene(4);
        let p = path_through(&s, &[[10.0, 23.0]]);
        let a = DataAssociation { per_step: vec![] };
        assert!(matches!(
            build_collective_jacobian(&s.map.belief, &p, &a, &s.motion, &s.sensor),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
