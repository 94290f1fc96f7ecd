//! Planar mobile-robot localization with an extended Kalman filter that fuses
//! differential-drive odometry, a magnetic compass heading and line features
//! extracted from a 2D laser range finder.
//!
//! The crate is organised bottom-up:
//!
//! - [`kinematics`]: the dead-reckoning motion model and its Jacobians.
//! - [`geometry`]: line normal-form algebra, scans, split-and-merge line
//!   extraction and Mahalanobis data association.
//! - [`ekf`]: prediction, measurement assembly, correction and the per-step
//!   localization pipeline.
//! - [`sim`]: a deterministic ground-truth world with noisy sensor synthesis
//!   and a pure-pursuit path controller.
//! - [`harness`]: experiment runner, deviation metrics and file output.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angle;
pub mod ekf;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kinematics;
pub mod sim;

pub use error::{Error, Result};
pub use kinematics::{OdometryDelta, Pose, RobotGeometry, WheelRates};
