use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Point = [f64; 2];

/// Axis-aligned rectangle `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }
}

/// Simple polygon given by its vertices in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon(pub Vec<Point>);

impl Polygon {
    pub fn rect(min: Point, max: Point) -> Self {
        Polygon(vec![min, [max[0], min[1]], max, [min[0], max[1]]])
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.0.len();
        (0..n).map(move |i| (self.0[i], self.0[(i + 1) % n]))
    }

    /// Even-odd ray casting; boundary points count as inside.
    pub fn contains(&self, p: Point) -> bool {
        if self.edges().any(|(a, b)| on_segment(a, b, p)) {
            return true;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn intersects_segment(&self, a: Point, b: Point) -> bool {
        self.contains(a) || self.contains(b) || self.edges().any(|(c, d)| segments_intersect(a, b, c, d))
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    cross(a, b, p).abs() <= 1e-12 * (1.0 + a[0].abs() + a[1].abs() + b[0].abs() + b[1].abs())
        && p[0] >= a[0].min(b[0]) - 1e-12
        && p[0] <= a[0].max(b[0]) + 1e-12
        && p[1] >= a[1].min(b[1]) - 1e-12
        && p[1] <= a[1].max(b[1]) + 1e-12
}

pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(c, d, a) || on_segment(c, d, b) || on_segment(a, b, c) || on_segment(a, b, d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub width: f64,
    pub height: f64,
    pub landmarks: usize,
    /// Rectangular obstacles as `[xmin, ymin, xmax, ymax]`.
    #[serde(default)]
    pub obstacles: Vec<[f64; 4]>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub landmarks: Vec<Point>,
    pub obstacles: Vec<Polygon>,
    pub bounds: Rect,
    pub seed: u64,
}

impl World {
    pub fn point_free(&self, p: Point) -> bool {
        self.bounds.contains(p) && !self.obstacles.iter().any(|o| o.contains(p))
    }

    pub fn segment_free(&self, a: Point, b: Point) -> bool {
        self.bounds.contains(a) && self.bounds.contains(b) && !self.obstacles.iter().any(|o| o.intersects_segment(a, b))
    }
}

/// Landmarks uniform over the free space of the bounds; deterministic in `seed`.
pub fn generate_world(config: &WorldConfig, seed: u64) -> Result<World> {
    if !(config.width > 0.0 && config.height > 0.0 && config.width.is_finite() && config.height.is_finite()) {
        return Err(Error::InfeasibleConfig(format!(
            "world extent must be positive, got {} x {}",
            config.width, config.height
        )));
    }
    let bounds = Rect::new([0.0, 0.0], [config.width, config.height]);
    let mut obstacles = Vec::with_capacity(config.obstacles.len());
    for r in &config.obstacles {
        let (min, max) = ([r[0], r[1]], [r[2], r[3]]);
        if !(r[0] < r[2] && r[1] < r[3]) || !bounds.contains(min) || !bounds.contains(max) {
            return Err(Error::InfeasibleConfig(format!("obstacle {r:?} is empty or outside the world")));
        }
        obstacles.push(Polygon::rect(min, max));
    }
    let mut world = World {
        landmarks: Vec::with_capacity(config.landmarks),
        obstacles,
        bounds,
        seed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_attempts = 1000 * (config.landmarks + 1);
    let mut attempts = 0;
    while world.landmarks.len() < config.landmarks {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::InfeasibleConfig("no free space left for landmarks".into()));
        }
        let p = [rng.gen_range(0.0..config.width), rng.gen_range(0.0..config.height)];
        if world.point_free(p) {
            world.landmarks.push(p);
        }
    }
    Ok(world)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(landmarks: usize) -> WorldConfig {
        WorldConfig {
            width: 100.0,
            height: 100.0,
            landmarks,
            obstacles: vec![[40.0, 40.0, 60.0, 60.0]],
            seed: 0,
        }
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(generate_world(&config(50), 9).unwrap(), generate_world(&config(50), 9).unwrap());
        assert_ne!(generate_world(&config(50), 9).unwrap(), generate_world(&config(50), 10).unwrap());
    }

    #[test]
    fn empty_world() {
        let w = generate_world(&config(0), 1).unwrap();
        assert!(w.landmarks.is_empty());
    }

    #[test]
    fn landmarks_within_bounds_and_free() {
        let w = generate_world(&config(300), 3).unwrap();
        assert_eq!(w.landmarks.len(), 300);
        assert!(w.landmarks.iter().all(|&p| w.bounds.contains(p) && w.point_free(p)));
    }

    #[test]
    fn infeasible_configs() {
        let mut c = config(1);
        c.width = -1.0;
        assert!(matches!(generate_world(&c, 0), Err(Error::InfeasibleConfig(_))));
        let mut c = config(1);
        c.obstacles = vec![[90.0, 90.0, 120.0, 95.0]];
        assert!(matches!(generate_world(&c, 0), Err(Error::InfeasibleConfig(_))));
        let mut c = config(5);
        c.obstacles = vec![[0.0, 0.0, 100.0, 100.0]];
        assert!(matches!(generate_world(&c, 0), Err(Error::InfeasibleConfig(_))));
    }

    #[test]
    fn segment_collisions() {
        let w = generate_world(&config(0), 0).unwrap();
        assert!(!w.segment_free([10.0, 50.0], [90.0, 50.0]));
        assert!(w.segment_free([10.0, 10.0], [90.0, 10.0]));
        assert!(!w.segment_free([10.0, 10.0], [150.0, 10.0]));
    }
}
