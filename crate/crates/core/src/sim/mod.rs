//! Deterministic ground truth for localization experiments.
//!
//! A [`World`] is a set of flat walls. The robot follows commanded wheel rates
//! exactly; the encoders, compass and range finder report that motion with
//! the noise levels of a [`NoiseConfig`](crate::ekf::NoiseConfig). All
//! randomness comes from one seeded ChaCha stream per scenario, drawn in a
//! fixed order, so a seed reproduces a run bit for bit.

mod controller;
mod raycast;
mod scenario;
mod sensors;

pub use controller::{inset_loop, path_controller, rounded_polygon, rounded_rectangle, ControllerConfig, PurePursuit};
pub use raycast::{beam_bearings, ray_distance, raycast, simulate_scan};
pub use scenario::{read_simlog, run_scenario, write_simlog, SimLog, SimStep, Simulator};
pub use sensors::{gaussian, seeded_rng, simulate_compass, simulate_encoders, SimRng};

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::ekf::NoiseConfig;
use crate::geometry::LineNF;
use crate::kinematics::{Pose, RobotGeometry};
use crate::{Error, Result};

/// Axis-aligned extent of the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Point2<f64>,
    pub max: Point2<f64>,
}

impl Bounds {
    pub fn contains_strictly(&self, p: &Point2<f64>) -> bool {
        p.x > self.min.x && p.x < self.max.x && p.y > self.min.y && p.y < self.max.y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub walls: Vec<LineNF>,
    pub bounds: Bounds,
}

impl World {
    pub fn new(walls: Vec<LineNF>) -> Result<Self> {
        if walls.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "a world needs at least 3 walls, got {}",
                walls.len()
            )));
        }
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in walls.iter().flat_map(|w| [w.seg_start, w.seg_end]) {
            min = min.inf(&p);
            max = max.sup(&p);
        }
        Ok(Self {
            walls,
            bounds: Bounds { min, max },
        })
    }

    /// A `width` x `height` rectangle with one corner at the origin. Walls in
    /// order: bottom, right, top, left.
    pub fn rectangle(width: f64, height: f64) -> Result<Self> {
        let c = [
            Point2::new(0.0, 0.0),
            Point2::new(width, 0.0),
            Point2::new(width, height),
            Point2::new(0.0, height),
        ];
        let walls = (0..4)
            .map(|i| LineNF::from_segment(c[i], c[(i + 1) % 4]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(walls)
    }

    pub fn contains(&self, pose: &Pose) -> bool {
        self.bounds.contains_strictly(&Point2::new(pose.x, pose.y))
    }
}

impl Default for World {
    /// 8 m x 6 m room.
    fn default() -> Self {
        Self::rectangle(8.0, 6.0).expect("static rectangle is valid")
    }
}

/// Range finder geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrfConfig {
    /// Field of view centred on the heading (rad), at most pi.
    pub fov: f64,
    pub angular_step: f64,
    pub min_range: f64,
    pub max_range: f64,
    /// Reported ranges are rounded to this resolution when range noise is on.
    pub range_resolution: f64,
}

impl Default for LrfConfig {
    /// 180 degree sweep at 0.5 degree steps, 0.04 m to 80 m, 1 mm resolution.
    fn default() -> Self {
        Self {
            fov: std::f64::consts::PI,
            angular_step: 0.5f64.to_radians(),
            min_range: 0.04,
            max_range: 80.0,
            range_resolution: 1e-3,
        }
    }
}

/// Everything needed to reproduce a simulated run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub geom: RobotGeometry,
    pub dt: f64,
    pub noise: NoiseConfig,
    pub lrf: LrfConfig,
    pub seed: u64,
    /// Number of steps.
    pub duration: usize,
    pub initial_pose: Pose,
    pub controller: ControllerConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            geom: RobotGeometry::default(),
            dt: 0.1,
            noise: NoiseConfig::default(),
            lrf: LrfConfig::default(),
            seed: 0,
            duration: 600,
            initial_pose: Pose::new(4.0, 1.0, 0.0),
            controller: ControllerConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.geom.validate()?;
        self.noise.validate()?;
        let lrf = &self.lrf;
        let ok = self.dt > 0.0
            && lrf.angular_step > 0.0
            && lrf.fov > 0.0
            && lrf.fov <= std::f64::consts::PI + 1e-12
            && lrf.min_range >= 0.0
            && lrf.max_range > lrf.min_range
            && lrf.range_resolution >= 0.0
            && self.initial_pose.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid simulation config: {self:?}")))
        }
    }
}
