//! Line features in normal form and everything that moves them between frames.
//!
//! Global lines satisfy `x cos(beta) + y sin(beta) = rho`. Robot-frame lines
//! use `(r, psi)` in the scanner frame, whose y axis points along the robot's
//! heading and whose x axis points to the robot's right. A wall straight ahead
//! of the robot therefore has `psi = pi/2`. Line extraction emits `psi` in the
//! same frame, so predictions and observations are directly comparable.

mod assoc;
mod extract;
mod map_io;
mod scan;

pub use assoc::{match_lines, Association, LinePair, PredictedLine};
pub use extract::{extract_lines, fit_line, ExtractionParams, LineFit, LocalLine};
pub use map_io::{format_map, parse_map, read_map, write_map};
pub use scan::{Scan, ScanRow};

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Point2, Rotation2, Vector2};
use serde::{Deserialize, Serialize};

use crate::angle::wrap_angle;
use crate::kinematics::Pose;
use crate::{Error, Result};

/// Distance below which the robot is considered to lie on a map line.
pub const EPSILON_ON_LINE: f64 = 1e-9;

const SEGMENT_TOLERANCE: f64 = 1e-9;

/// A wall in the global frame: normal-form parameters plus segment extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineNF {
    pub rho: f64,
    pub beta: f64,
    pub seg_start: Point2<f64>,
    pub seg_end: Point2<f64>,
}

impl LineNF {
    /// Builds a line from canonical parameters and two endpoints on it.
    pub fn new(rho: f64, beta: f64, seg_start: Point2<f64>, seg_end: Point2<f64>) -> Result<Self> {
        if !(rho >= 0.0 && beta > -PI && beta <= PI) {
            return Err(Error::InvalidArgument(format!(
                "line ({rho}, {beta}) is not in canonical form"
            )));
        }
        let line = Self {
            rho,
            beta,
            seg_start,
            seg_end,
        };
        for p in [seg_start, seg_end] {
            let res = line.residual(&p);
            if !(res.abs() <= SEGMENT_TOLERANCE) {
                return Err(Error::InvalidArgument(format!(
                    "segment endpoint ({}, {}) is {res:e} m off the line",
                    p.x, p.y
                )));
            }
        }
        Ok(line)
    }

    /// The infinite line through two distinct points, with those points as extent.
    pub fn from_segment(a: Point2<f64>, b: Point2<f64>) -> Result<Self> {
        let d = b - a;
        let len = d.norm();
        if !(len > 0.0 && len.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "segment endpoints must be distinct and finite, got {a} and {b}"
            )));
        }
        let n = Vector2::new(-d.y, d.x) / len;
        // Average both endpoints so neither carries all the rounding.
        let rho = 0.5 * (n.dot(&a.coords) + n.dot(&b.coords));
        let (rho, beta) = normalize_line(rho, n.y.atan2(n.x))?;
        let mut line = Self {
            rho,
            beta,
            seg_start: a,
            seg_end: b,
        };
        line.seg_start = line.project(&a);
        line.seg_end = line.project(&b);
        Ok(line)
    }

    /// From normal-form parameters, snapping the given endpoints onto the line.
    pub fn from_params_snapped(rho: f64, beta: f64, a: Point2<f64>, b: Point2<f64>) -> Result<Self> {
        let (rho, beta) = normalize_line(rho, beta)?;
        let mut line = Self {
            rho,
            beta,
            seg_start: a,
            seg_end: b,
        };
        line.seg_start = line.project(&a);
        line.seg_end = line.project(&b);
        Ok(line)
    }

    pub fn normal(&self) -> Vector2<f64> {
        Vector2::new(self.beta.cos(), self.beta.sin())
    }

    /// Signed distance `x cos(beta) + y sin(beta) - rho`.
    pub fn residual(&self, p: &Point2<f64>) -> f64 {
        self.normal().dot(&p.coords) - self.rho
    }

    /// Orthogonal projection of `p` onto the line.
    pub fn project(&self, p: &Point2<f64>) -> Point2<f64> {
        p - self.normal() * self.residual(p)
    }

    pub fn length(&self) -> f64 {
        (self.seg_end - self.seg_start).norm()
    }
}

/// Canonical normal form: `rho >= 0`, `beta` in (-pi, pi].
pub fn normalize_line(rho: f64, beta: f64) -> Result<(f64, f64)> {
    if !(rho.is_finite() && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "line parameters must be finite, got ({rho}, {beta})"
        )));
    }
    if rho < 0.0 {
        Ok((-rho, wrap_angle(beta + PI)))
    } else {
        Ok((rho, wrap_angle(beta)))
    }
}

/// A global line as seen from a pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinePrediction {
    /// Signed distance `rho - x cos(beta) - y sin(beta)`; positive when the
    /// origin and the robot lie on the same side of the line.
    pub c: f64,
    pub r_hat: f64,
    pub psi_hat: f64,
    pub theta_hat: f64,
}

impl LinePrediction {
    pub fn sign(&self) -> f64 {
        self.c.signum()
    }
}

/// Predicts the robot-frame parameters of a global line.
pub fn line_to_robot_frame(line: &LineNF, pose: &Pose) -> Result<LinePrediction> {
    let c = line.rho - pose.x * line.beta.cos() - pose.y * line.beta.sin();
    if !(c.abs() >= EPSILON_ON_LINE) {
        return Err(Error::DegenerateGeometry(format!(
            "pose ({:.6}, {:.6}) lies on line (rho={}, beta={})",
            pose.x, pose.y, line.rho, line.beta
        )));
    }
    let flip = if c > 0.0 { 0.0 } else { PI };
    Ok(LinePrediction {
        c,
        r_hat: c.abs(),
        psi_hat: wrap_angle(line.beta - (pose.theta - FRAC_PI_2) + flip),
        theta_hat: pose.theta,
    })
}

/// Inverse of [`line_to_robot_frame`]: robot-frame `(r, psi)` to canonical
/// global `(rho, beta)`.
pub fn robot_line_to_global(r: f64, psi: f64, pose: &Pose) -> Result<(f64, f64)> {
    let beta = psi + pose.theta - FRAC_PI_2;
    let rho = r + pose.x * beta.cos() + pose.y * beta.sin();
    normalize_line(rho, beta)
}

/// Cartesian point in the scanner frame for a sample at `bearing` (measured
/// from the robot's heading, counter-clockwise positive).
pub fn scan_point(bearing: f64, range: f64) -> Point2<f64> {
    let phi = bearing + FRAC_PI_2;
    Point2::new(range * phi.cos(), range * phi.sin())
}

/// Maps a scanner-frame point into the global frame.
pub fn scan_to_global(p: &Point2<f64>, pose: &Pose) -> Point2<f64> {
    let rot = Rotation2::new(pose.theta - FRAC_PI_2);
    Point2::new(pose.x, pose.y) + rot * p.coords
}

/// Maps a global point into the scanner frame.
pub fn global_to_scan(p: &Point2<f64>, pose: &Pose) -> Point2<f64> {
    let rot = Rotation2::new(pose.theta - FRAC_PI_2);
    Point2::from(rot.inverse() * (p - Point2::new(pose.x, pose.y)))
}

impl LocalLine {
    /// Lifts an extracted line into the global frame using `pose`, with the
    /// segment extent taken from the supporting points' projections.
    pub fn to_global(&self, pose: &Pose) -> Result<LineNF> {
        let (rho, beta) = robot_line_to_global(self.r, self.psi, pose)?;
        LineNF::from_params_snapped(
            rho,
            beta,
            scan_to_global(&self.first_point, pose),
            scan_to_global(&self.last_point, pose),
        )
    }
}
