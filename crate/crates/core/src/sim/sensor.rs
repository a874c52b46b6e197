use crate::error::{Error, Result};
use crate::motion::{wrap_angle, Pose2};
use nalgebra::{Matrix2, Matrix2x3, Vector2};
use std::f64::consts::TAU;

/// Range-bearing sensor `z = h(x, l) + v`, `v ~ N(0, V)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSpec {
    pub max_range: f64,
    /// Full field of view in radians; `2π` or more is omnidirectional.
    pub fov: f64,
    /// Noise covariance over `(range, bearing)`.
    pub noise: Matrix2<f64>,
}

impl SensorSpec {
    pub fn new(max_range: f64, fov: f64, sigma_range: f64, sigma_bearing: f64) -> Self {
        Self {
            max_range,
            fov,
            noise: Matrix2::new(sigma_range * sigma_range, 0.0, 0.0, sigma_bearing * sigma_bearing),
        }
    }

    /// `(‖l − p‖, atan2(l − p) − θ)` with the bearing wrapped to `(−π, π]`.
    pub fn predict(&self, pose: Pose2, landmark: [f64; 2]) -> Vector2<f64> {
        let (dx, dy) = (landmark[0] - pose.x, landmark[1] - pose.y);
        Vector2::new(dx.hypot(dy), wrap_angle(dy.atan2(dx) - pose.theta))
    }

    /// Whether `landmark` lies within range and field of view of `pose`.
    pub fn sees(&self, pose: Pose2, landmark: [f64; 2]) -> bool {
        let z = self.predict(pose, landmark);
        z[0] > 1e-9 && z[0] <= self.max_range && (self.fov >= TAU || z[1].abs() <= 0.5 * self.fov)
    }

    /// `(∂h/∂x, ∂h/∂l)` at the given linearization point.
    pub fn jacobian(&self, pose: Pose2, landmark: [f64; 2]) -> (Matrix2x3<f64>, Matrix2<f64>) {
        let (dx, dy) = (landmark[0] - pose.x, landmark[1] - pose.y);
        let q = dx * dx + dy * dy;
        let r = q.sqrt();
        let hx = Matrix2x3::new(-dx / r, -dy / r, 0.0, dy / q, -dx / q, -1.0);
        let hl = Matrix2::new(dx / r, dy / r, -dy / q, dx / q);
        (hx, hl)
    }

    /// Landmark position that produces measurement `z` from `pose`.
    pub fn invert(&self, pose: Pose2, z: Vector2<f64>) -> [f64; 2] {
        let a = pose.theta + z[1];
        [pose.x + z[0] * a.cos(), pose.y + z[0] * a.sin()]
    }

    /// `V^{-1/2}` as the inverse of the lower Cholesky factor of `V`.
    pub fn whitener(&self) -> Result<Matrix2<f64>> {
        self.noise
            .cholesky()
            .and_then(|c| c.l().try_inverse())
            .ok_or(Error::NotPositiveDefinite("measurement noise covariance"))
    }
}
