//! Planar poses, relative actions and the motion model `x' = f(x, a) + w`.

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::fmt::Debug;
use std::sync::Arc;

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.theta)
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn position(self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn distance_to(self, p: [f64; 2]) -> f64 {
        (self.x - p[0]).hypot(self.y - p[1])
    }
}

/// Relative motion expressed in the body frame of the pose it is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl Action {
    pub fn new(dx: f64, dy: f64, dtheta: f64) -> Self {
        Self { dx, dy, dtheta }
    }

    /// Action that takes `from` onto `target`, arriving facing along the travelled segment.
    pub fn towards(from: Pose2, target: [f64; 2]) -> Self {
        let (ex, ey) = (target[0] - from.x, target[1] - from.y);
        let (s, c) = from.theta.sin_cos();
        let heading = if ex == 0.0 && ey == 0.0 {
            from.theta
        } else {
            ey.atan2(ex)
        };
        Self {
            dx: c * ex + s * ey,
            dy: -s * ex + c * ey,
            dtheta: wrap_angle(heading - from.theta),
        }
    }
}

/// Deterministic pose transition `f` with its Jacobian with respect to the pose.
pub trait MotionModel: Debug + Send + Sync {
    fn predict(&self, pose: Pose2, action: &Action) -> Pose2;
    fn jacobian(&self, pose: Pose2, action: &Action) -> Matrix3<f64>;
}

/// Body-frame odometry: translate by `(dx, dy)` in the current heading, then rotate by `dθ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Odometry;

impl MotionModel for Odometry {
    fn predict(&self, p: Pose2, a: &Action) -> Pose2 {
        let (s, c) = p.theta.sin_cos();
        Pose2::new(
            p.x + c * a.dx - s * a.dy,
            p.y + s * a.dx + c * a.dy,
            wrap_angle(p.theta + a.dtheta),
        )
    }

    fn jacobian(&self, p: Pose2, a: &Action) -> Matrix3<f64> {
        let (s, c) = p.theta.sin_cos();
        Matrix3::new(
            1.0,
            0.0,
            -s * a.dx - c * a.dy,
            0.0,
            1.0,
            c * a.dx - s * a.dy,
            0.0,
            0.0,
            1.0,
        )
    }
}

/// Motion model together with its process-noise covariance `W`.
#[derive(Debug, Clone)]
pub struct MotionSpec {
    pub model: Arc<dyn MotionModel>,
    pub noise: Matrix3<f64>,
}

impl MotionSpec {
    pub fn new(model: Arc<dyn MotionModel>, noise: Matrix3<f64>) -> Self {
        Self { model, noise }
    }

    pub fn odometry(sigma_xy: f64, sigma_theta: f64) -> Self {
        Self::new(
            Arc::new(Odometry),
            Matrix3::from_diagonal(&Vector3::new(
                sigma_xy * sigma_xy,
                sigma_xy * sigma_xy,
                sigma_theta * sigma_theta,
            )),
        )
    }

    /// `W^{-1/2}` as the inverse of the lower Cholesky factor of `W`.
    pub fn whitener(&self) -> Result<Matrix3<f64>> {
        whitener3(&self.noise)
    }
}

pub(crate) fn whitener3(cov: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let chol = cov
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("motion noise covariance"))?;
    chol.l()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite("motion noise covariance"))
}
