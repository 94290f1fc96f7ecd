use nalgebra::{Point2, Vector2};

use super::sensors::{gaussian, SimRng};
use super::{LrfConfig, World};
use crate::ekf::NoiseConfig;
use crate::geometry::{LineNF, Scan};
use crate::kinematics::Pose;
use crate::{Error, Result};

/// Nominal beam bearings, evenly spaced across the field of view and centred
/// on the heading.
pub fn beam_bearings(lrf: &LrfConfig) -> Vec<f64> {
    let half = 0.5 * lrf.fov;
    let n = ((lrf.fov / lrf.angular_step) + 1e-9).floor() as usize + 1;
    let span = (n - 1) as f64 * lrf.angular_step;
    let start = -0.5 * span;
    (0..n)
        .map(|i| (start + i as f64 * lrf.angular_step).clamp(-half, half))
        .collect()
}

/// Distance along the ray from `origin` in direction `dir` (unit) to `wall`,
/// if the ray meets the wall segment.
fn hit_distance(origin: &Point2<f64>, dir: &Vector2<f64>, wall: &LineNF) -> Option<f64> {
    let seg = wall.seg_end - wall.seg_start;
    let denom = dir.perp(&seg);
    if denom.abs() < 1e-15 {
        return None;
    }
    let w = wall.seg_start - origin;
    let t = w.perp(&seg) / denom;
    let s = w.perp(dir) / denom;
    const SLACK: f64 = 1e-12;
    (t >= 0.0 && (-SLACK..=1.0 + SLACK).contains(&s)).then_some(t)
}

/// Nearest wall along a global direction, brute force over all walls.
pub fn ray_distance(world: &World, origin: &Point2<f64>, direction: f64) -> Option<f64> {
    let dir = Vector2::new(direction.cos(), direction.sin());
    world
        .walls
        .iter()
        .filter_map(|w| hit_distance(origin, &dir, w))
        .min_by(f64::total_cmp)
}

/// Noise-free sweep: exact distances, samples beyond range flagged invalid.
pub fn raycast(world: &World, pose: &Pose, lrf: &LrfConfig) -> Result<Scan> {
    scan_with(world, pose, lrf, |_| (0.0, 0.0))
}

/// Noisy sweep. Each beam's true direction is jittered by the bearing noise
/// while the nominal bearing is reported; the range gets Gaussian noise and
/// is rounded to the sensor resolution. Two draws per beam, bearing first.
pub fn simulate_scan(
    world: &World,
    pose: &Pose,
    lrf: &LrfConfig,
    noise: &NoiseConfig,
    rng: &mut SimRng,
) -> Result<Scan> {
    scan_with(world, pose, lrf, |_| {
        let nb = gaussian(rng);
        let nr = gaussian(rng);
        (noise.lrf_bearing_sigma * nb, noise.lrf_range_sigma * nr)
    })
}

fn scan_with(
    world: &World,
    pose: &Pose,
    lrf: &LrfConfig,
    mut perturb: impl FnMut(usize) -> (f64, f64),
) -> Result<Scan> {
    if !world.contains(pose) {
        return Err(Error::InvalidPose { x: pose.x, y: pose.y });
    }
    let origin = Point2::new(pose.x, pose.y);
    let bearings = beam_bearings(lrf);
    let ranges: Vec<Option<f64>> = bearings
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let (db, dr) = perturb(i);
            let d = ray_distance(world, &origin, pose.theta + b + db)?;
            let mut r = d + dr;
            if dr != 0.0 && lrf.range_resolution > 0.0 {
                r = (r / lrf.range_resolution).round() * lrf.range_resolution;
            }
            (r >= lrf.min_range && r <= lrf.max_range && d <= lrf.max_range).then_some(r)
        })
        .collect();
    Scan::from_samples(bearings, &ranges, lrf.max_range)
}
