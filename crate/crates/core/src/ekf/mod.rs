//! Extended Kalman filter over the planar pose.
//!
//! Prediction pushes the estimate through the odometry model with
//! wheel-rate noise whose variance grows with the square of each wheel's
//! rate. Correction stacks matched line observations `(r, psi)` and, when
//! enabled, the compass heading into one measurement vector.

mod localizer;
mod measurement;

pub use localizer::{step, EstimatorMode, FilterConfig, Localizer, StepInput, StepMode, StepReport};
pub use measurement::{
    assemble_bundle, build_measurement_cov, predict_measurements, predicted_lines, MeasurementBundle,
};

use nalgebra::{DMatrix, Matrix2, Matrix3, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use crate::angle::wrap_angle;
use crate::kinematics::{
    jacobian_noise, jacobian_state, propagate_pose, wheel_to_body, Pose, RobotGeometry, WheelRates,
};
use crate::{Error, Result};

/// Innovation covariances worse conditioned than this are refused.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Pose mean with its 3x3 covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateEstimate {
    pub mean: Pose,
    pub cov: Matrix3<f64>,
}

impl StateEstimate {
    pub fn new(mean: Pose, cov: Matrix3<f64>) -> Self {
        Self { mean, cov }
    }

    /// Exact knowledge of the pose.
    pub fn certain(mean: Pose) -> Self {
        Self::new(mean, Matrix3::zeros())
    }

    pub fn trace(&self) -> f64 {
        self.cov.trace()
    }

    /// Largest absolute entry of `P - P^T`.
    pub fn asymmetry(&self) -> f64 {
        (self.cov - self.cov.transpose()).amax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.cov).eigenvalues.min()
    }
}

/// Sensor and actuation noise levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Proportional factor of the wheel-rate variance, `var = delta * omega^2`.
    pub delta: f64,
    /// Compass heading variance (rad^2).
    pub compass_var: f64,
    /// 1-sigma range noise of the scanner (m).
    pub lrf_range_sigma: f64,
    /// 1-sigma bearing jitter of the scanner (rad).
    pub lrf_bearing_sigma: f64,
}

impl Default for NoiseConfig {
    /// delta = 0.01, compass 0.1 deg, scanner 30 mm and 0.25 deg (1 sigma).
    fn default() -> Self {
        Self {
            delta: 0.01,
            compass_var: 0.1f64.to_radians().powi(2),
            lrf_range_sigma: 0.03,
            lrf_bearing_sigma: 0.25f64.to_radians(),
        }
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self {
            delta: 0.0,
            compass_var: 0.0,
            lrf_range_sigma: 0.0,
            lrf_bearing_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.delta,
            self.compass_var,
            self.lrf_range_sigma,
            self.lrf_bearing_sigma,
        ];
        if all.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "noise levels must be finite and non-negative: {self:?}"
            )))
        }
    }
}

/// Wheel-rate noise covariance, ordered (right, left).
pub fn input_noise_cov(rates: WheelRates, delta: f64) -> Matrix2<f64> {
    Matrix2::from_diagonal(&Vector2::new(
        delta * rates.omega_r * rates.omega_r,
        delta * rates.omega_l * rates.omega_l,
    ))
}

/// Time update `P = A P A^T + W Q W^T`, with the mean pushed through the
/// noise-free motion model.
pub fn predict(state: &StateEstimate, rates: WheelRates, geom: &RobotGeometry, dt: f64, delta: f64) -> StateEstimate {
    let odo = wheel_to_body(rates, geom, dt);
    let a = jacobian_state(&state.mean, odo);
    let w = jacobian_noise(&state.mean, odo, geom, dt);
    let q = input_noise_cov(rates, delta);
    let cov = a * state.cov * a.transpose() + w * q * w.transpose();
    StateEstimate {
        mean: propagate_pose(&state.mean, odo),
        cov: 0.5 * (cov + cov.transpose()),
    }
}

/// Measurement update with the optimal gain.
///
/// `S = H P H^T + R` is checked for conditioning and solved by Cholesky;
/// the posterior covariance is `(I - K H) P`, symmetrised.
pub fn update(state: &StateEstimate, bundle: &MeasurementBundle) -> Result<StateEstimate> {
    let p = DMatrix::from_column_slice(3, 3, state.cov.as_slice());
    let h = &bundle.h;
    let s = h * &p * h.transpose() + &bundle.r;
    let s = (&s + s.transpose()) * 0.5;

    let eig = SymmetricEigen::new(s.clone()).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::SingularUpdate { condition });
    }
    let chol = s.cholesky().ok_or(Error::SingularUpdate { condition })?;
    // K = P H^T S^-1, computed as (S^-1 H P)^T since S and P are symmetric.
    let k = chol.solve(&(h * &p)).transpose();

    let nu = bundle.innovation();
    let dx = &k * nu;
    let mean = state.mean.to_vector() + nalgebra::Vector3::new(dx[0], dx[1], dx[2]);
    let ikh = DMatrix::<f64>::identity(3, 3) - &k * h;
    let post = ikh * p;
    let post = (&post + post.transpose()) * 0.5;
    Ok(StateEstimate {
        mean: Pose::new(mean[0], mean[1], wrap_angle(mean[2])),
        cov: Matrix3::from_column_slice(post.as_slice()),
    })
}

/// Kalman gain for `state` and `bundle`; exposed for diagnostics and tests.
pub fn kalman_gain(state: &StateEstimate, bundle: &MeasurementBundle) -> Option<DMatrix<f64>> {
    let p = DMatrix::from_column_slice(3, 3, state.cov.as_slice());
    let s = &bundle.h * &p * bundle.h.transpose() + &bundle.r;
    let chol = s.cholesky()?;
    Some(chol.solve(&(&bundle.h * &p)).transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    #[test]
    fn input_noise_examples() {
        assert_eq!(input_noise_cov(WheelRates::ZERO, 0.01), Matrix2::zeros());
        let q = input_noise_cov(WheelRates::new(2.0, 2.0), 0.01);
        assert_abs_diff_eq!(q, Matrix2::new(0.04, 0.0, 0.0, 0.04), epsilon = 1e-15);
        // (right, left) ordering.
        let q = input_noise_cov(WheelRates::new(3.0, 1.0), 0.01);
        assert_abs_diff_eq!(q, Matrix2::new(0.01, 0.0, 0.0, 0.09), epsilon = 1e-15);
    }

    #[test]
    fn default_noise_levels() {
        let n = NoiseConfig::default();
        assert_abs_diff_eq!(n.compass_var, 3.046e-6, epsilon = 1e-9);
        assert_abs_diff_eq!(n.lrf_bearing_sigma, 0.004363, epsilon = 1e-6);
        assert!(NoiseConfig { delta: -1.0, ..n }.validate().is_err());
    }

    #[test]
    fn predict_without_motion_is_identity() {
        let cov = Matrix3::new(0.1, 0.01, 0.0, 0.01, 0.2, 0.0, 0.0, 0.0, 0.05);
        let s = StateEstimate::new(Pose::new(1.0, 2.0, 0.3), cov);
        let out = predict(&s, WheelRates::ZERO, &RobotGeometry::default(), 0.1, 0.01);
        assert_eq!(out.mean, s.mean);
        assert_eq!(out.cov, cov);
    }

    #[test]
    fn predict_from_certain_state() {
        let geom = RobotGeometry::default();
        let s = StateEstimate::certain(Pose::default());
        let out = predict(&s, WheelRates::new(2.0, 2.0), &geom, 0.1, 0.01);
        assert_abs_diff_eq!(out.mean.x, 0.01, epsilon = 1e-15);
        // Hand product W diag(0.04, 0.04) W^T with W from the noise Jacobian
        // example: rows (0.0025, 0.0025), (1/1200, -1/1200) in x/theta after
        // the straight step, plus the small ds/L coupling into y.
        let w = jacobian_noise(
            &Pose::default(),
            wheel_to_body(WheelRates::new(2.0, 2.0), &geom, 0.1),
            &geom,
            0.1,
        );
        let expected = w * Matrix2::from_diagonal_element(0.04) * w.transpose();
        assert_abs_diff_eq!(out.cov, expected, epsilon = 1e-18);
        assert_abs_diff_eq!(out.cov[(0, 0)], 2.0 * 0.04 * 0.0025f64.powi(2), epsilon = 1e-15);
        assert_abs_diff_eq!(
            out.cov[(2, 2)],
            2.0 * 0.04 * (0.1 * 0.05 / 0.6f64).powi(2),
            epsilon = 1e-15
        );
        let eig = SymmetricEigen::new(out.cov).eigenvalues;
        assert!(eig.min() > -1e-18);
        assert!(eig.iter().filter(|e| e.abs() > 1e-15).count() <= 2);
    }

    fn compass_bundle(innovation: f64, var: f64) -> MeasurementBundle {
        MeasurementBundle::new(
            DVector::from_element(1, innovation),
            DVector::zeros(1),
            DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]),
            DMatrix::from_element(1, 1, var),
            0,
            true,
        )
        .unwrap()
    }

    #[test]
    fn scalar_compass_update() {
        let s = StateEstimate::new(Pose::default(), Matrix3::identity());
        let b = compass_bundle(0.1, 0.01);
        let k = kalman_gain(&s, &b).unwrap();
        assert_abs_diff_eq!(k[(2, 0)], 0.990099, epsilon = 1e-6);
        assert_eq!((k[(0, 0)], k[(1, 0)]), (0.0, 0.0));
        let post = update(&s, &b).unwrap();
        assert_abs_diff_eq!(post.mean.theta, 0.0990099, epsilon = 1e-7);
        assert_abs_diff_eq!(post.cov[(2, 2)], 0.00990099, epsilon = 1e-8);
        assert_eq!(post.cov[(0, 0)], 1.0);
    }

    #[test]
    fn uninformative_measurement_leaves_prior() {
        let s = StateEstimate::new(Pose::new(1.0, 1.0, 0.5), Matrix3::identity() * 1e-2);
        let post = update(&s, &compass_bundle(0.3, 1e12)).unwrap();
        assert_abs_diff_eq!(post.mean.theta, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(post.cov, s.cov, epsilon = 1e-9);
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let s = StateEstimate::new(Pose::new(1.0, 1.0, 0.5), Matrix3::identity() * 1e-2);
        let post = update(&s, &compass_bundle(0.0, 1e-4)).unwrap();
        assert_eq!(post.mean, s.mean);
        assert!(post.min_eigenvalue() >= 0.0);
        assert!(post.trace() < s.trace());
    }

    #[test]
    fn ill_conditioned_innovation_is_refused() {
        let s = StateEstimate::new(Pose::default(), Matrix3::zeros());
        let b = MeasurementBundle::new(
            DVector::zeros(2),
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-13])),
            1,
            false,
        )
        .unwrap();
        assert!(matches!(update(&s, &b), Err(Error::SingularUpdate { .. })));
    }
}
