//! Angle helpers. Every stored angle lives in (-pi, pi].

use std::f64::consts::{PI, TAU};

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Wrapped difference `a - b`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}
