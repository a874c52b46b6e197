use super::world::{Point, World};
use crate::error::{Error, Result};
use crate::motion::{Action, Pose2};
use pathfinding::directed::yen::yen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Fixed-point scale for integer edge costs.
const COST_SCALE: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePath {
    pub id: usize,
    /// Positions from start to goal; the first is the start position.
    pub waypoints: Vec<Point>,
    /// One action per roadmap edge, from the start pose.
    pub actions: Vec<Action>,
    pub length: f64,
}

impl CandidatePath {
    /// Derives the actions that drive `start` through each waypoint in turn.
    pub fn from_waypoints(id: usize, start: Pose2, waypoints: Vec<Point>) -> Self {
        let mut pose = start;
        let mut actions = Vec::with_capacity(waypoints.len().saturating_sub(1));
        let mut length = 0.0;
        for w in waypoints.windows(2) {
            let a = Action::towards(pose, w[1]);
            length += (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            let heading = pose.theta + a.dtheta;
            pose = Pose2::new(w[1][0], w[1][1], crate::motion::wrap_angle(heading));
            actions.push(a);
        }
        Self {
            id,
            waypoints,
            actions,
            length,
        }
    }

    /// The first `steps` actions (all of them if fewer) and their waypoints.
    pub fn truncated(&self, steps: usize) -> Self {
        let steps = steps.min(self.actions.len());
        let waypoints = self.waypoints[..=steps].to_vec();
        let length = waypoints.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).sum();
        Self {
            id: self.id,
            waypoints,
            actions: self.actions[..steps].to_vec(),
            length,
        }
    }

    pub fn goal(&self) -> Point {
        *self.waypoints.last().expect("paths have at least one waypoint")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrmConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_neighbors")]
    pub neighbors: usize,
    /// Connection radius; derived from the world when absent.
    #[serde(default)]
    pub radius: Option<f64>,
}

fn default_samples() -> usize {
    500
}

fn default_neighbors() -> usize {
    10
}

impl Default for PrmConfig {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            neighbors: default_neighbors(),
            radius: None,
        }
    }
}

/// Twice the mean nearest-neighbour landmark spacing, but never below twice the
/// mean sample spacing so that sparse landmark sets still yield a connected roadmap.
pub fn default_radius(world: &World, samples: usize) -> f64 {
    let sample_spacing = (world.bounds.area() / samples.max(1) as f64).sqrt();
    let lm = &world.landmarks;
    if lm.len() < 2 {
        return 2.0 * sample_spacing;
    }
    let mean_nn = lm
        .iter()
        .enumerate()
        .map(|(i, a)| {
            lm.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / lm.len() as f64;
    2.0 * mean_nn.max(sample_spacing)
}

/// Undirected roadmap over free-space nodes; node 0 is the start and node 1 the goal.
#[derive(Debug, Clone)]
pub struct Roadmap {
    pub nodes: Vec<Point>,
    pub edges: Vec<Vec<(usize, u64)>>,
}

pub fn build_roadmap(world: &World, start: Point, goal: Point, config: &PrmConfig, seed: u64) -> Result<Roadmap> {
    for (name, p) in [("start", start), ("goal", goal)] {
        if !world.point_free(p) {
            return Err(Error::InfeasibleConfig(format!("{name} {p:?} is not in free space")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = vec![start, goal];
    let (min, max) = (world.bounds.min, world.bounds.max);
    for _ in 0..config.samples {
        let p = [rng.gen_range(min[0]..=max[0]), rng.gen_range(min[1]..=max[1])];
        if world.point_free(p) {
            nodes.push(p);
        }
    }
    let radius = config.radius.unwrap_or_else(|| default_radius(world, config.samples));
    let n = nodes.len();
    let mut edges: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
    for i in 0..n {
        let mut near: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| ((nodes[i][0] - nodes[j][0]).hypot(nodes[i][1] - nodes[j][1]), j))
            .filter(|&(d, _)| d <= radius)
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d, j) in near.iter().take(config.neighbors) {
            if edges[i].iter().any(|&(k, _)| k == j) || !world.segment_free(nodes[i], nodes[j]) {
                continue;
            }
            let cost = (d * COST_SCALE).round() as u64;
            edges[i].push((j, cost));
            edges[j].push((i, cost));
        }
    }
    Ok(Roadmap { nodes, edges })
}

/// The `count` shortest loop-free start→goal paths through a seeded roadmap.
///
/// Fewer paths are returned when the roadmap does not contain `count` of them.
pub fn prm_generate(
    world: &World,
    start: Pose2,
    goal: Point,
    count: usize,
    config: &PrmConfig,
    seed: u64,
) -> Result<Vec<CandidatePath>> {
    let map = build_roadmap(world, start.position(), goal, config, seed)?;
    let found = yen(&0usize, |&v| map.edges[v].iter().copied(), |&v| v == 1, count.max(1));
    if found.is_empty() {
        return Err(Error::GoalUnreachable);
    }
    Ok(found
        .into_iter()
        .take(count)
        .enumerate()
        .map(|(id, (nodes, _))| CandidatePath::from_waypoints(id, start, nodes.iter().map(|&v| map.nodes[v]).collect()))
        .collect())
}
