//! Differential-drive dead reckoning.
//!
//! Wheel rates over one sampling period become wheel travel distances,
//! which become a centre displacement `ds` and heading increment `dtheta`;
//! the pose is then advanced along the chord at the mid-step heading.

use nalgebra::{Matrix3, Matrix3x2, Vector3};
use serde::{Deserialize, Serialize};

use crate::angle::wrap_angle;

/// Planar pose in the global frame. `theta` is kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.theta)
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Wheel radius `R` and track width `L` (distance between the drive wheels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotGeometry {
    pub wheel_radius: f64,
    pub track: f64,
}

impl Default for RobotGeometry {
    /// 10 cm wheel diameter, 60 cm between the drive wheels.
    fn default() -> Self {
        Self {
            wheel_radius: 0.05,
            track: 0.6,
        }
    }
}

impl RobotGeometry {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.wheel_radius > 0.0 && self.track > 0.0) {
            return Err(crate::Error::InvalidArgument(format!(
                "robot geometry needs positive wheel radius and track, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Wheel angular rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WheelRates {
    pub omega_l: f64,
    pub omega_r: f64,
}

impl WheelRates {
    pub const ZERO: WheelRates = WheelRates {
        omega_l: 0.0,
        omega_r: 0.0,
    };

    pub fn new(omega_l: f64, omega_r: f64) -> Self {
        Self { omega_l, omega_r }
    }

    /// Scales both wheels down uniformly so neither exceeds `omega_max`.
    /// Keeps the commanded curvature.
    pub fn clamped(self, omega_max: f64) -> Self {
        let peak = self.omega_l.abs().max(self.omega_r.abs());
        if peak > omega_max && peak > 0.0 {
            let s = omega_max / peak;
            Self::new(self.omega_l * s, self.omega_r * s)
        } else {
            self
        }
    }
}

/// Centre displacement and heading increment over one sampling period.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OdometryDelta {
    pub ds: f64,
    pub dtheta: f64,
}

pub fn wheel_to_body(rates: WheelRates, geom: &RobotGeometry, dt: f64) -> OdometryDelta {
    let ds_l = dt * geom.wheel_radius * rates.omega_l;
    let ds_r = dt * geom.wheel_radius * rates.omega_r;
    OdometryDelta {
        ds: 0.5 * (ds_l + ds_r),
        dtheta: (ds_r - ds_l) / geom.track,
    }
}

pub fn propagate_pose(pose: &Pose, delta: OdometryDelta) -> Pose {
    let mid = pose.theta + 0.5 * delta.dtheta;
    Pose {
        x: pose.x + delta.ds * mid.cos(),
        y: pose.y + delta.ds * mid.sin(),
        theta: wrap_angle(pose.theta + delta.dtheta),
    }
}

/// Full motion model: wheel rates straight to the next pose.
pub fn motion_model(pose: &Pose, rates: WheelRates, geom: &RobotGeometry, dt: f64) -> Pose {
    propagate_pose(pose, wheel_to_body(rates, geom, dt))
}

/// Jacobian of the motion model with respect to the state `(x, y, theta)`.
#[rustfmt::skip]
pub fn jacobian_state(pose: &Pose, delta: OdometryDelta) -> Matrix3<f64> {
    let mid = pose.theta + 0.5 * delta.dtheta;
    let (s, c) = mid.sin_cos();
    Matrix3::new(
        1.0, 0.0, -delta.ds * s,
        0.0, 1.0,  delta.ds * c,
        0.0, 0.0,  1.0,
    )
}

/// Jacobian of the motion model with respect to wheel-rate noise.
///
/// Columns are ordered (right wheel, left wheel) to line up with the
/// input-noise covariance.
#[rustfmt::skip]
pub fn jacobian_noise(pose: &Pose, delta: OdometryDelta, geom: &RobotGeometry, dt: f64) -> Matrix3x2<f64> {
    let mid = pose.theta + 0.5 * delta.dtheta;
    let (s, c) = mid.sin_cos();
    let k = delta.ds / geom.track;
    let two_over_l = 2.0 / geom.track;
    Matrix3x2::new(
        c - k * s,   c + k * s,
        s + k * c,   s - k * c,
        two_over_l, -two_over_l,
    ) * (0.5 * dt * geom.wheel_radius)
}
