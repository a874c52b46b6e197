//! TOML scenario files.

use crate::motion::{MotionSpec, Pose2};
use crate::bounds::Backend;
use crate::parallel::Execution;
use crate::partition::SplitStrategy;
use crate::planner::{Objective, PlannerConfig};
use crate::sim::{MappingOptions, Point, PrmConfig, SensorSpec, WorldConfig};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub max_range: f64,
    /// Field of view in radians.
    #[serde(default = "full_circle")]
    pub fov: f64,
    pub sigma_range: f64,
    pub sigma_bearing: f64,
}

fn full_circle() -> f64 {
    std::f64::consts::TAU
}

impl SensorConfig {
    pub fn spec(&self) -> SensorSpec {
        SensorSpec::new(self.max_range, self.fov, self.sigma_range, self.sigma_bearing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionConfig {
    pub sigma_xy: f64,
    pub sigma_theta: f64,
}

impl MotionConfig {
    pub fn spec(&self) -> MotionSpec {
        MotionSpec::odometry(self.sigma_xy, self.sigma_theta)
    }
}

/// Prior-mapping run: the robot starts at `start` and visits `waypoints` in
/// order, moving at most `step` per odometry action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingConfig {
    pub start: [f64; 3],
    pub waypoints: Vec<Point>,
    pub step: f64,
    #[serde(default = "default_prior_sigma")]
    pub prior_sigma: [f64; 3],
    /// Probability of keeping a landmark re-observation factor.
    #[serde(default = "one")]
    pub density: f64,
}

fn default_prior_sigma() -> [f64; 3] {
    MappingOptions::default().prior_sigma
}

fn one() -> f64 {
    1.0
}

impl MappingConfig {
    pub fn start_pose(&self) -> Pose2 {
        Pose2::new(self.start[0], self.start[1], self.start[2])
    }

    pub fn options(&self) -> MappingOptions {
        MappingOptions {
            prior_sigma: self.prior_sigma,
            density: self.density,
        }
    }

    /// The polyline through `waypoints` cut into pieces no longer than `step`.
    pub fn trajectory(&self) -> Vec<Point> {
        let mut out = Vec::new();
        let mut at = [self.start[0], self.start[1]];
        for &w in &self.waypoints {
            let d = (w[0] - at[0]).hypot(w[1] - at[1]);
            let n = (d / self.step).ceil().max(1.0) as usize;
            for i in 1..=n {
                let t = i as f64 / n as f64;
                out.push([at[0] + t * (w[0] - at[0]), at[1] + t * (w[1] - at[1])]);
            }
            at = w;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningConfig {
    pub paths: usize,
    pub goal: Point,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default)]
    pub strategy: SplitStrategy,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub refinement_budget: usize,
    #[serde(default)]
    pub exact: bool,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub prm: PrmConfig,
}

fn default_depth() -> usize {
    PlannerConfig::default().depth
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Candidate used by the convergence and depth sweeps.
    pub path: usize,
    pub densities: Vec<f64>,
    pub speedup_rows: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            path: 0,
            densities: vec![0.1, 0.3, 0.5, 0.7, 1.0],
            speedup_rows: vec![64, 128, 256, 512],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub sensor: SensorConfig,
    pub motion: MotionConfig,
    pub mapping: MappingConfig,
    pub planning: PlanningConfig,
    /// Re-planning iterations after the first session; 0 runs a single session.
    #[serde(default)]
    pub replan_steps: usize,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: Option<PathBuf>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn invalid(field: &str, message: impl Into<String>) -> Self {
        Self {
            path: None,
            line: None,
            column: None,
            field: Some(field.to_string()),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = &self.path {
            write!(f, "{}", p.display())?;
            if let Some(l) = self.line {
                write!(f, ":{l}")?;
                if let Some(c) = self.column {
                    write!(f, ":{c}")?;
                }
            }
            write!(f, ": ")?;
        }
        if let Some(field) = &self.field {
            write!(f, "`{field}`: ")?;
        }
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

/// First backquoted identifier in a serde message, e.g. "missing field `seed`".
fn field_hint(message: &str) -> Option<String> {
    let start = message.find('`')?;
    let rest = &message[start + 1..];
    Some(rest[..rest.find('`')?].to_string())
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let (line, column) = match e.span() {
                Some(s) => {
                    let (l, c) = line_col(text, s.start);
                    (Some(l), Some(c))
                }
                None => (None, None),
            };
            ConfigError {
                path: None,
                line,
                column,
                field: field_hint(e.message()),
                message: e.message().trim().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: Some(path.to_path_buf()),
            line: None,
            column: None,
            field: None,
            message: e.to_string(),
        })?;
        Self::parse(&text).map_err(|e| ConfigError {
            path: Some(path.to_path_buf()),
            ..e
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs serialize")
    }

    /// Range and consistency checks that serde cannot express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::invalid(field, format!("must be positive and finite, got {v}")))
            }
        };
        positive("world.width", self.world.width)?;
        positive("world.height", self.world.height)?;
        positive("sensor.max_range", self.sensor.max_range)?;
        positive("sensor.fov", self.sensor.fov)?;
        positive("sensor.sigma_range", self.sensor.sigma_range)?;
        positive("sensor.sigma_bearing", self.sensor.sigma_bearing)?;
        positive("motion.sigma_xy", self.motion.sigma_xy)?;
        positive("motion.sigma_theta", self.motion.sigma_theta)?;
        positive("mapping.step", self.mapping.step)?;
        for (i, s) in self.mapping.prior_sigma.iter().enumerate() {
            positive(&format!("mapping.prior_sigma[{i}]"), *s)?;
        }
        let unit = |field: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::invalid(field, format!("must lie in [0, 1], got {v}")))
            }
        };
        unit("mapping.density", self.mapping.density)?;
        for d in &self.sweep.densities {
            unit("sweep.densities", *d)?;
        }
        if self.planning.paths == 0 {
            return Err(ConfigError::invalid("planning.paths", "at least one candidate path is required"));
        }
        if !self.planning.alpha.is_finite() || self.planning.alpha < 0.0 {
            return Err(ConfigError::invalid("planning.alpha", "must be a finite non-negative weight"));
        }
        if let Some(r) = self.planning.prm.radius {
            positive("planning.prm.radius", r)?;
        }
        if self.planning.prm.neighbors == 0 {
            return Err(ConfigError::invalid("planning.prm.neighbors", "must be at least 1"));
        }
        if self.planning.horizon == Some(0) {
            return Err(ConfigError::invalid("planning.horizon", "must be at least 1 when given"));
        }
        if self.sweep.path >= self.planning.paths {
            return Err(ConfigError::invalid(
                "sweep.path",
                format!("index {} exceeds the {} requested paths", self.sweep.path, self.planning.paths),
            ));
        }
        if self.sweep.speedup_rows.iter().any(|&m| m < 2 || m % 2 != 0) {
            return Err(ConfigError::invalid("sweep.speedup_rows", "row counts must be even and at least 2"));
        }
        Ok(())
    }

    pub fn planner(&self) -> PlannerConfig {
        let p = &self.planning;
        PlannerConfig {
            depth: p.depth,
            strategy: p.strategy,
            backend: p.backend,
            objective: p.objective,
            horizon: p.horizon,
            alpha: p.alpha,
            goal: Some(p.goal),
            refinement_budget: p.refinement_budget,
            exact: p.exact,
            execution: p.execution,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
seed = 3

[world]
width = 30.0
height = 30.0
landmarks = 40
seed = 1

[sensor]
max_range = 6.0
sigma_range = 0.1
sigma_bearing = 0.01

[motion]
sigma_xy = 0.1
sigma_theta = 0.01

[mapping]
start = [3.0, 3.0, 0.0]
waypoints = [[25.0, 3.0], [25.0, 10.0]]
step = 2.0

[planning]
paths = 5
goal = [26.0, 26.0]
depth = 2
"#;

    #[test]
    fn minimal_parses_with_defaults() {
        let c = ScenarioConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.planning.depth, 2);
        assert_eq!(c.planning.prm, PrmConfig::default());
        assert_eq!(c.mapping.density, 1.0);
        assert_eq!(c.replan_steps, 0);
        assert_eq!(c.planner().goal, Some([26.0, 26.0]));
        let again = ScenarioConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn trajectory_respects_step() {
        let c = ScenarioConfig::parse(MINIMAL).unwrap();
        let t = c.mapping.trajectory();
        assert_eq!(t.len(), 11 + 4);
        assert_eq!(t[10], [25.0, 3.0]);
        assert_eq!(*t.last().unwrap(), [25.0, 10.0]);
        let mut at = [3.0, 3.0];
        for p in t {
            assert!((p[0] - at[0]).hypot(p[1] - at[1]) <= 2.0 + 1e-12);
            at = p;
        }
    }

    #[test]
    fn errors_carry_line_and_field() {
        let bad = MINIMAL.replace("sigma_xy = 0.1", "sigma_xy = \"x\"");
        let e = ScenarioConfig::parse(&bad).unwrap_err();
        assert_eq!(e.line, Some(16));
        assert!(e.message.contains("invalid type"), "{e}");

        let missing = MINIMAL.replace("seed = 3\n", "");
        let e = ScenarioConfig::parse(&missing).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("seed"));

        let unknown = MINIMAL.replace("depth = 2", "depht = 2");
        let e = ScenarioConfig::parse(&unknown).unwrap_err();
        assert!(e.message.contains("depht"), "{e}");

        let e = ScenarioConfig::parse(&MINIMAL.replace("step = 2.0", "step = -1.0")).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("mapping.step"));
        let shown = ConfigError { path: Some("a.toml".into()), ..e }.to_string();
        assert!(shown.starts_with("a.toml: `mapping.step`"), "{shown}");
    }
}
