use super::sensor::SensorSpec;
use super::world::World;
use crate::belief::{GaussianBelief, InfoMatrix, VarId, VariableIndex};
use crate::error::{Error, Result};
use crate::linalg::{self, SparseRow};
use crate::motion::{whitener3, Action, MotionSpec, Pose2};
use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappingOptions {
    /// Standard deviations of the prior on the first pose.
    pub prior_sigma: [f64; 3],
    /// Probability of keeping a re-observation factor. First observations are always kept.
    pub density: f64,
}

impl Default for MappingOptions {
    fn default() -> Self {
        Self {
            prior_sigma: [0.01, 0.01, 0.001],
            density: 1.0,
        }
    }
}

/// Incremental factor-graph builder that simulates a robot moving through a world.
///
/// Factors are linearized once at the dead-reckoned pose means and at the
/// landmark positions inverted from their first (noisy) observation.
#[derive(Debug, Clone)]
pub struct Mapper {
    motion: MotionSpec,
    sensor: SensorSpec,
    density: f64,
    motion_whitener: Matrix3<f64>,
    noise_chol: Matrix3<f64>,
    sensor_whitener: nalgebra::Matrix2<f64>,
    sensor_chol: nalgebra::Matrix2<f64>,
    vars: Vec<VariableIndex>,
    lookup: HashMap<VarId, usize>,
    mean: Vec<f64>,
    rows: Vec<SparseRow>,
    true_pose: Pose2,
    pose_id: usize,
    factors: usize,
    measurement_factors: usize,
    noise_rng: ChaCha8Rng,
    prune_rng: ChaCha8Rng,
}

impl Mapper {
    /// Places pose 0 at `start` with a prior factor and takes the first set of measurements.
    pub fn start(
        world: &World,
        start: Pose2,
        motion: MotionSpec,
        sensor: SensorSpec,
        options: &MappingOptions,
        seed: u64,
    ) -> Result<Self> {
        if !world.point_free(start.position()) {
            return Err(Error::InfeasibleConfig(format!("start {:?} is not in free space", start.position())));
        }
        if !(0.0..=1.0).contains(&options.density) {
            return Err(Error::InfeasibleConfig(format!("density {} outside [0, 1]", options.density)));
        }
        let motion_whitener = motion.whitener()?;
        let noise_chol = motion
            .noise
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("motion noise covariance"))?
            .l();
        let sensor_whitener = sensor.whitener()?;
        let sensor_chol = sensor
            .noise
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("measurement noise covariance"))?
            .l();
        let s = options.prior_sigma;
        let prior_whitener = whitener3(&Matrix3::from_diagonal(&Vector3::new(s[0] * s[0], s[1] * s[1], s[2] * s[2])))
            .map_err(|_| Error::NotPositiveDefinite("first-pose prior covariance"))?;
        let mut m = Self {
            motion,
            sensor,
            density: options.density,
            motion_whitener,
            noise_chol,
            sensor_whitener,
            sensor_chol,
            vars: Vec::new(),
            lookup: HashMap::new(),
            mean: Vec::new(),
            rows: Vec::new(),
            true_pose: start,
            pose_id: 0,
            factors: 0,
            measurement_factors: 0,
            noise_rng: ChaCha8Rng::seed_from_u64(seed),
            prune_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5bd1_e995_0000_0001),
        };
        let p0 = m.push_var(VarId::Pose(0), &[start.x, start.y, start.theta]);
        for r in 0..3 {
            let mut row = SparseRow::default();
            for c in 0..3 {
                if prior_whitener[(r, c)] != 0.0 {
                    row.cols.push(p0.offset + c);
                    row.vals.push(prior_whitener[(r, c)]);
                }
            }
            m.rows.push(row);
        }
        m.factors += 1;
        m.observe(world);
        Ok(m)
    }

    fn push_var(&mut self, id: VarId, value: &[f64]) -> VariableIndex {
        let v = VariableIndex::new(id, self.mean.len());
        self.lookup.insert(id, self.vars.len());
        self.vars.push(v);
        self.mean.extend_from_slice(value);
        v
    }

    fn current_pose(&self) -> (VariableIndex, Pose2) {
        let v = self.vars[self.lookup[&VarId::Pose(self.pose_id)]];
        (v, Pose2::from_slice(&self.mean[v.cols()]))
    }

    fn observe(&mut self, world: &World) {
        let (pv, mu) = self.current_pose();
        for (j, &lm) in world.landmarks.iter().enumerate() {
            if !self.sensor.sees(self.true_pose, lm) {
                continue;
            }
            let e: Vector2<f64> = Vector2::new(self.noise_rng.sample(StandardNormal), self.noise_rng.sample(StandardNormal));
            let mut z = self.sensor.predict(self.true_pose, lm) + self.sensor_chol * e;
            z[1] = crate::motion::wrap_angle(z[1]);
            let id = VarId::Landmark(j);
            let lv = match self.lookup.get(&id) {
                Some(&k) => {
                    let keep: f64 = self.prune_rng.gen();
                    if keep >= self.density {
                        continue;
                    }
                    self.vars[k]
                }
                None => {
                    let init = self.sensor.invert(mu, z);
                    self.push_var(id, &init)
                }
            };
            let l = [self.mean[lv.offset], self.mean[lv.offset + 1]];
            let (hx, hl) = self.sensor.jacobian(mu, l);
            let wx = self.sensor_whitener * hx;
            let wl = self.sensor_whitener * hl;
            for r in 0..2 {
                let mut row = SparseRow::default();
                for c in 0..3 {
                    row.cols.push(pv.offset + c);
                    row.vals.push(wx[(r, c)]);
                }
                for c in 0..2 {
                    row.cols.push(lv.offset + c);
                    row.vals.push(wl[(r, c)]);
                }
                self.rows.push(row);
            }
            self.factors += 1;
            self.measurement_factors += 1;
        }
    }

    /// Executes `action` with process noise, adds the odometry factor and the new measurements.
    pub fn step(&mut self, world: &World, action: &Action) {
        let (pv, mu) = self.current_pose();
        let f = self.motion.model.jacobian(mu, action);
        let next_mu = self.motion.model.predict(mu, action);
        let e = Vector3::new(
            self.noise_rng.sample(StandardNormal),
            self.noise_rng.sample(StandardNormal),
            self.noise_rng.sample(StandardNormal),
        );
        let w = self.noise_chol * e;
        let t = self.motion.model.predict(self.true_pose, action);
        self.true_pose = Pose2::new(t.x + w[0], t.y + w[1], crate::motion::wrap_angle(t.theta + w[2]));
        self.pose_id += 1;
        let nv = self.push_var(VarId::Pose(self.pose_id), &[next_mu.x, next_mu.y, next_mu.theta]);
        let left = -(self.motion_whitener * f);
        for r in 0..3 {
            let mut row = SparseRow::default();
            for c in 0..3 {
                row.cols.push(pv.offset + c);
                row.vals.push(left[(r, c)]);
            }
            for c in 0..3 {
                row.cols.push(nv.offset + c);
                row.vals.push(self.motion_whitener[(r, c)]);
            }
            self.rows.push(row);
        }
        self.factors += 1;
        self.observe(world);
    }

    /// Commands the pose estimate toward `target` and executes that action.
    pub fn step_towards(&mut self, world: &World, target: [f64; 2]) -> Action {
        let (_, mu) = self.current_pose();
        let a = Action::towards(mu, target);
        self.step(world, &a);
        a
    }

    /// Information-form belief over every pose and mapped landmark.
    pub fn belief(&self) -> Result<GaussianBelief> {
        let n = self.mean.len();
        let mut info = DMatrix::zeros(n, n);
        linalg::add_gram(&mut info, &self.rows);
        let belief = GaussianBelief::from_parts(
            InfoMatrix::new(info)?,
            DVector::from_column_slice(&self.mean),
            self.vars.clone(),
        )?;
        belief.info().factor()?;
        Ok(belief)
    }

    pub fn true_pose(&self) -> Pose2 {
        self.true_pose
    }

    /// Estimated (dead-reckoned) current pose.
    pub fn estimated_pose(&self) -> Pose2 {
        self.current_pose().1
    }

    pub fn pose_count(&self) -> usize {
        self.pose_id + 1
    }

    pub fn factor_count(&self) -> usize {
        self.factors
    }

    pub fn measurement_factor_count(&self) -> usize {
        self.measurement_factors
    }

    /// Average number of kept landmark observations per pose.
    pub fn landmarks_per_pose(&self) -> f64 {
        self.measurement_factors as f64 / self.pose_count() as f64
    }
}

/// Result of an initial mapping run.
#[derive(Debug, Clone)]
pub struct PriorMap {
    pub belief: GaussianBelief,
    pub mapper: Mapper,
}

/// Drives a simulated robot along `trajectory` (positions, starting at `start`) and
/// accumulates the linearized motion and measurement factors into a belief.
pub fn prior_mapping(
    world: &World,
    start: Pose2,
    trajectory: &[[f64; 2]],
    motion: &MotionSpec,
    sensor: &SensorSpec,
    options: &MappingOptions,
    seed: u64,
) -> Result<PriorMap> {
    if let Some(p) = trajectory.iter().find(|p| !world.bounds.contains(**p)) {
        return Err(Error::InfeasibleConfig(format!("trajectory point {p:?} outside the world")));
    }
    let mut mapper = Mapper::start(world, start, motion.clone(), *sensor, options, seed)?;
    for &p in trajectory {
        mapper.step_towards(world, p);
    }
    Ok(PriorMap {
        belief: mapper.belief()?,
        mapper,
    })
}
