//! Pure-pursuit path following and reference path construction.

use std::f64::consts::{PI, TAU};

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::angle::angle_diff;
use crate::geometry::{line_to_robot_frame, LineNF};
use crate::kinematics::{Pose, RobotGeometry, WheelRates};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Cruise speed of the robot centre (m/s).
    pub speed: f64,
    /// Lookahead distance along the path (m).
    pub lookahead: f64,
    /// The run ends once the final waypoint is this close (m).
    pub goal_tolerance: f64,
    /// Wheel-rate limit (rad/s).
    pub omega_max: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            speed: 0.3,
            lookahead: 0.3,
            goal_tolerance: 0.05,
            omega_max: 20.0,
        }
    }
}

/// Pure-pursuit follower with monotone progress along a polyline.
///
/// Progress only moves forward, so closed loops (first waypoint equal to the
/// last) are driven once instead of being declared finished at the start.
#[derive(Debug, Clone)]
pub struct PurePursuit {
    path: Vec<Point2<f64>>,
    arclength: Vec<f64>,
    progress: f64,
    finished: bool,
    config: ControllerConfig,
}

impl PurePursuit {
    pub fn new(path: Vec<Point2<f64>>, config: ControllerConfig) -> Result<Self> {
        if path.len() < 2 {
            return Err(Error::InvalidArgument("a path needs at least 2 waypoints".into()));
        }
        let mut arclength = Vec::with_capacity(path.len());
        let mut s = 0.0;
        arclength.push(0.0);
        for w in path.windows(2) {
            s += (w[1] - w[0]).norm();
            arclength.push(s);
        }
        Ok(Self {
            path,
            arclength,
            progress: 0.0,
            finished: false,
            config,
        })
    }

    pub fn path(&self) -> &[Point2<f64>] {
        &self.path
    }

    pub fn length(&self) -> f64 {
        *self.arclength.last().unwrap()
    }

    pub fn progress(&self) -> f64 {
        self.progress
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Point at arclength `s`, clamped to the path.
    pub fn point_at(&self, s: f64) -> Point2<f64> {
        let s = s.clamp(0.0, self.length());
        let i = self
            .arclength
            .partition_point(|&a| a <= s)
            .clamp(1, self.path.len() - 1);
        let (s0, s1) = (self.arclength[i - 1], self.arclength[i]);
        let t = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        self.path[i - 1] + (self.path[i] - self.path[i - 1]) * t
    }

    /// Closest path arclength to `p` among segments overlapping `[lo, hi]`.
    fn project(&self, p: &Point2<f64>, lo: f64, hi: f64) -> f64 {
        let mut best = (f64::INFINITY, self.progress);
        for i in 1..self.path.len() {
            let (s0, s1) = (self.arclength[i - 1], self.arclength[i]);
            if s1 < lo || s0 > hi {
                continue;
            }
            let (a, b) = (self.path[i - 1], self.path[i]);
            let ab = b - a;
            let len2 = ab.norm_squared();
            let t = if len2 > 0.0 {
                ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let d = (p - (a + ab * t)).norm();
            if d < best.0 {
                best = (d, s0 + t * (s1 - s0));
            }
        }
        best.1
    }

    /// Wheel rates steering `pose` toward the lookahead point.
    pub fn command(&mut self, pose: &Pose, geom: &RobotGeometry) -> WheelRates {
        if self.finished {
            return WheelRates::ZERO;
        }
        let cfg = self.config;
        let here = Point2::new(pose.x, pose.y);
        let window = (self.progress - 0.1, self.progress + cfg.lookahead + 0.5);
        let s = self.project(&here, window.0, window.1);
        self.progress = self.progress.max(s);

        let end = *self.path.last().unwrap();
        let to_end = (end - here).norm();
        let remaining = self.length() - self.progress;
        if remaining <= cfg.lookahead && to_end <= cfg.goal_tolerance {
            self.finished = true;
            return WheelRates::ZERO;
        }

        let target = self.point_at(self.progress + cfg.lookahead);
        let mut speed = cfg.speed;
        if remaining <= cfg.lookahead {
            speed *= (to_end / cfg.lookahead).clamp(0.2, 1.0);
        }
        pursue(pose, &target, speed, geom, cfg.omega_max)
    }
}

/// Pure-pursuit law: drive the arc through the robot and `target` that is
/// tangent to the current heading.
fn pursue(pose: &Pose, target: &Point2<f64>, speed: f64, geom: &RobotGeometry, omega_max: f64) -> WheelRates {
    let (s, c) = pose.theta.sin_cos();
    let (dx, dy) = (target.x - pose.x, target.y - pose.y);
    let lx = c * dx + s * dy;
    let ly = -s * dx + c * dy;
    let d2 = lx * lx + ly * ly;
    if d2 < 1e-12 {
        return WheelRates::ZERO;
    }
    let mut curvature = 2.0 * ly / d2;
    if lx < 0.0 && ly.abs() < 1e-9 {
        // Target dead behind: pick a side.
        curvature = 2.0 / d2.sqrt();
    }
    let yaw_rate = speed * curvature;
    let half_track = 0.5 * geom.track;
    WheelRates::new(
        (speed - yaw_rate * half_track) / geom.wheel_radius,
        (speed + yaw_rate * half_track) / geom.wheel_radius,
    )
    .clamped(omega_max)
}

/// Stateless pure pursuit with the default lookahead and limits: progress is
/// the closest point on the whole path. Suitable for open paths; closed loops
/// need [`PurePursuit`] to keep track of how far round they are.
pub fn path_controller(pose: &Pose, path: &[Point2<f64>], speed: f64, geom: &RobotGeometry) -> Result<WheelRates> {
    let config = ControllerConfig {
        speed,
        ..ControllerConfig::default()
    };
    let mut pp = PurePursuit::new(path.to_vec(), config)?;
    let here = Point2::new(pose.x, pose.y);
    pp.progress = pp.project(&here, f64::NEG_INFINITY, f64::INFINITY);
    Ok(pp.command(pose, geom))
}

/// Closed polyline around a convex polygon (counter-clockwise vertices) with
/// each corner replaced by a circular fillet. Starts and ends at the midpoint
/// of the first edge.
pub fn rounded_polygon(vertices: &[Point2<f64>], radius: f64, arc_step: f64) -> Result<Vec<Point2<f64>>> {
    let n = vertices.len();
    if n < 3 || radius < 0.0 || arc_step <= 0.0 {
        return Err(Error::InvalidArgument(
            "rounded polygon needs >= 3 vertices and a positive arc step".into(),
        ));
    }
    let start = nalgebra::center(&vertices[0], &vertices[1]);
    let mut path = vec![start];
    for i in 1..=n {
        let v = vertices[i % n];
        let d_in = (v - vertices[i - 1]).normalize();
        let d_out = (vertices[(i + 1) % n] - v).normalize();
        let turn = angle_diff(d_out.y.atan2(d_out.x), d_in.y.atan2(d_in.x));
        if turn <= 0.0 {
            return Err(Error::InvalidArgument(
                "polygon must be convex and counter-clockwise".into(),
            ));
        }
        let t = radius * (0.5 * turn).tan();
        let a = v - d_in * t;
        let center = a + Vector2::new(-d_in.y, d_in.x) * radius;
        let steps = ((turn * radius / arc_step).ceil() as usize).max(1);
        let start_angle = (a - center).y.atan2((a - center).x);
        for k in 0..=steps {
            let ang = start_angle + turn * k as f64 / steps as f64;
            path.push(center + Vector2::new(ang.cos(), ang.sin()) * radius);
        }
    }
    path.push(start);
    path.dedup_by(|a, b| (*a - *b).norm() < 1e-12);
    Ok(path)
}

/// Axis-aligned rounded rectangle, counter-clockwise from the middle of the
/// bottom edge.
pub fn rounded_rectangle(min: Point2<f64>, max: Point2<f64>, radius: f64) -> Result<Vec<Point2<f64>>> {
    let v = [min, Point2::new(max.x, min.y), max, Point2::new(min.x, max.y)];
    rounded_polygon(&v, radius, 0.05)
}

/// Loop that runs `offset` inside the walls around `start`, with rounded
/// corners, beginning and ending at the loop point closest to `start`.
///
/// Walls are ordered by the direction in which `start` sees them; walls seen
/// in nearly the same direction are treated as one (the longer wins).
pub fn inset_loop(walls: &[LineNF], start: &Pose, offset: f64, radius: f64) -> Result<Vec<Point2<f64>>> {
    struct Side {
        toward: f64,
        // Inset line: n . q = rho
        n: Vector2<f64>,
        rho: f64,
        length: f64,
    }
    let mut sides: Vec<Side> = Vec::new();
    for w in walls {
        let Ok(pred) = line_to_robot_frame(w, start) else {
            continue;
        };
        let sign = pred.sign();
        let n = w.normal() * sign;
        let side = Side {
            toward: n.y.atan2(n.x),
            n,
            rho: w.rho * sign - offset,
            length: w.length(),
        };
        match sides.iter_mut().find(|s| angle_diff(s.toward, side.toward).abs() < 0.1) {
            Some(s) if s.length < side.length => *s = side,
            Some(_) => {}
            None => sides.push(side),
        }
    }
    if sides.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need >= 3 distinct walls for a loop, got {}",
            sides.len()
        )));
    }
    sides.sort_by(|a, b| a.toward.total_cmp(&b.toward));

    let m = sides.len();
    let mut vertices = Vec::with_capacity(m);
    for i in 0..m {
        let (a, b) = (&sides[i], &sides[(i + 1) % m]);
        let gap = angle_diff(b.toward, a.toward).rem_euclid(TAU);
        if gap >= PI - 1e-6 {
            return Err(Error::InvalidArgument("walls do not enclose the start pose".into()));
        }
        let det = a.n.x * b.n.y - a.n.y * b.n.x;
        let x = (a.rho * b.n.y - b.rho * a.n.y) / det;
        let y = (a.n.x * b.rho - b.n.x * a.rho) / det;
        vertices.push(Point2::new(x, y));
    }
    // Vertex i joins side i and side i+1; walking sides by increasing
    // direction is counter-clockwise.
    let ring = rounded_polygon(&vertices, radius, 0.05)?;
    let here = Point2::new(start.x, start.y);
    let mut best = (f64::INFINITY, 0, here);
    for i in 1..ring.len() {
        let (a, b) = (ring[i - 1], ring[i]);
        let ab = b - a;
        let t = ((here - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        let p = a + ab * t;
        let d = (here - p).norm();
        if d < best.0 {
            best = (d, i, p);
        }
    }
    let (_, i, p) = best;
    let mut path = vec![p];
    path.extend_from_slice(&ring[i..ring.len() - 1]);
    path.extend_from_slice(&ring[..i]);
    path.push(p);
    path.dedup_by(|a, b| (*a - *b).norm() < 1e-12);
    Ok(path)
}
