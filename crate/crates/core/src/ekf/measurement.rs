use nalgebra::{DMatrix, DVector, Matrix2, RowVector3};

use crate::angle::angle_diff;
use crate::geometry::{line_to_robot_frame, Association, LineNF, LinePair, LocalLine, PredictedLine};
use crate::{Error, Result};

use super::StateEstimate;

/// Stacked observation for one correction step.
///
/// Rows are `(r_1, psi_1, ..., r_N, psi_N)` in ascending map-line order,
/// followed by the compass heading when present.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBundle {
    pub z: DVector<f64>,
    pub z_hat: DVector<f64>,
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
    n_lines: usize,
    has_compass: bool,
}

impl MeasurementBundle {
    pub fn new(
        z: DVector<f64>,
        z_hat: DVector<f64>,
        h: DMatrix<f64>,
        r: DMatrix<f64>,
        n_lines: usize,
        has_compass: bool,
    ) -> Result<Self> {
        let m = 2 * n_lines + usize::from(has_compass);
        if m == 0 {
            return Err(Error::InvalidMeasurement("empty measurement bundle".into()));
        }
        let dims_ok = z.len() == m && z_hat.len() == m && h.shape() == (m, 3) && r.shape() == (m, m);
        if !dims_ok {
            return Err(Error::InvalidMeasurement(format!(
                "inconsistent bundle dimensions for {m} rows: z {}, z_hat {}, H {:?}, R {:?}",
                z.len(),
                z_hat.len(),
                h.shape(),
                r.shape()
            )));
        }
        if let Some(i) = (0..m).find(|&i| !(r[(i, i)] > 0.0)) {
            return Err(Error::InvalidMeasurement(format!(
                "R[{i},{i}] = {} is not positive",
                r[(i, i)]
            )));
        }
        Ok(Self {
            z,
            z_hat,
            h,
            r,
            n_lines,
            has_compass,
        })
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn n_lines(&self) -> usize {
        self.n_lines
    }

    pub fn has_compass(&self) -> bool {
        self.has_compass
    }

    fn is_angular_row(&self, i: usize) -> bool {
        i % 2 == 1 || (self.has_compass && i == self.dim() - 1)
    }

    /// `z - z_hat` with every angular row wrapped.
    pub fn innovation(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| {
                if self.is_angular_row(i) {
                    angle_diff(self.z[i], self.z_hat[i])
                } else {
                    self.z[i] - self.z_hat[i]
                }
            }),
        )
    }

    /// Drops the trailing compass row.
    pub fn without_compass(self) -> Result<Self> {
        if !self.has_compass {
            return Ok(self);
        }
        let m = self.dim() - 1;
        Self::new(
            self.z.rows(0, m).into_owned(),
            self.z_hat.rows(0, m).into_owned(),
            self.h.rows(0, m).into_owned(),
            self.r.view((0, 0), (m, m)).into_owned(),
            self.n_lines,
            false,
        )
    }
}

/// Jacobian rows of `(r_hat, psi_hat)` with respect to the pose.
fn line_jacobian(sign: f64, beta: f64) -> [RowVector3<f64>; 2] {
    [
        RowVector3::new(-sign * beta.cos(), -sign * beta.sin(), 0.0),
        RowVector3::new(0.0, 0.0, -1.0),
    ]
}

/// Every map line that is not degenerate at the state mean, predicted into
/// the scanner frame with its state-induced innovation covariance `H P H^T`.
pub fn predicted_lines(state: &StateEstimate, map: &[LineNF]) -> Vec<PredictedLine> {
    map.iter()
        .enumerate()
        .filter_map(|(j, line)| {
            let pred = line_to_robot_frame(line, &state.mean).ok()?;
            let [hr, hpsi] = line_jacobian(pred.sign(), line.beta);
            let hr_p = hr * state.cov;
            let hpsi_p = hpsi * state.cov;
            let rr = hr_p.dot(&hr);
            let rp = hr_p.dot(&hpsi);
            let pp = hpsi_p.dot(&hpsi);
            Some(PredictedLine {
                global_index: j,
                r_hat: pred.r_hat,
                psi_hat: pred.psi_hat,
                cov: Matrix2::new(rr, rp, rp, pp),
            })
        })
        .collect()
}

/// Predicted measurement and Jacobian for the matched lines, with the
/// compass row last.
pub fn predict_measurements(
    state: &StateEstimate,
    map: &[LineNF],
    assoc: &Association,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let pairs = assoc.by_global_index();
    let m = 2 * pairs.len() + 1;
    let mut z_hat = DVector::zeros(m);
    let mut h = DMatrix::zeros(m, 3);
    for (n, pair) in pairs.iter().enumerate() {
        let line = map.get(pair.global).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "association references map line {} of {}",
                pair.global,
                map.len()
            ))
        })?;
        let pred = line_to_robot_frame(line, &state.mean)?;
        let [hr, hpsi] = line_jacobian(pred.sign(), line.beta);
        z_hat[2 * n] = pred.r_hat;
        z_hat[2 * n + 1] = pred.psi_hat;
        h.set_row(2 * n, &hr);
        h.set_row(2 * n + 1, &hpsi);
    }
    z_hat[m - 1] = state.mean.theta;
    h[(m - 1, 2)] = 1.0;
    Ok((z_hat, h))
}

fn local_for<'a>(locals: &'a [LocalLine], pair: &LinePair) -> Result<&'a LocalLine> {
    locals.get(pair.local).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "association references local line {} of {}",
            pair.local,
            locals.len()
        ))
    })
}

/// Block-diagonal measurement covariance: each matched line contributes the
/// diagonal of its fit covariance, the compass variance comes last.
pub fn build_measurement_cov(locals: &[LocalLine], assoc: &Association, compass_var: f64) -> Result<DMatrix<f64>> {
    if !(compass_var > 0.0) {
        return Err(Error::InvalidMeasurement(format!(
            "compass variance {compass_var} is not positive"
        )));
    }
    let pairs = assoc.by_global_index();
    let m = 2 * pairs.len() + 1;
    let mut r = DMatrix::zeros(m, m);
    for (n, pair) in pairs.iter().enumerate() {
        let local = local_for(locals, pair)?;
        let (vr, vpsi) = (local.cov[(0, 0)], local.cov[(1, 1)]);
        if !(vr > 0.0 && vpsi > 0.0) {
            return Err(Error::InvalidMeasurement(format!(
                "local line {} has non-positive variance ({vr}, {vpsi})",
                pair.local
            )));
        }
        r[(2 * n, 2 * n)] = vr;
        r[(2 * n + 1, 2 * n + 1)] = vpsi;
    }
    r[(m - 1, m - 1)] = compass_var;
    Ok(r)
}

/// Builds the full correction input. Lines whose fit variance is not
/// positive are dropped before assembly. `compass` is `(phi, variance)`;
/// without it the bundle carries line rows only.
pub fn assemble_bundle(
    state: &StateEstimate,
    locals: &[LocalLine],
    map: &[LineNF],
    assoc: &Association,
    compass: Option<(f64, f64)>,
) -> Result<MeasurementBundle> {
    let mut usable = assoc.clone();
    usable.pairs.retain(|p| {
        locals
            .get(p.local)
            .is_some_and(|l| l.cov[(0, 0)] > 0.0 && l.cov[(1, 1)] > 0.0)
    });
    let (phi, var) = compass.unwrap_or((state.mean.theta, 1.0));
    let (z_hat, h) = predict_measurements(state, map, &usable)?;
    let r = build_measurement_cov(locals, &usable, var)?;
    let pairs = usable.by_global_index();
    let mut z = DVector::zeros(z_hat.len());
    for (n, pair) in pairs.iter().enumerate() {
        let local = local_for(locals, pair)?;
        z[2 * n] = local.r;
        z[2 * n + 1] = local.psi;
    }
    z[z_hat.len() - 1] = phi;
    let bundle = MeasurementBundle::new(z, z_hat, h, r, pairs.len(), true)?;
    if compass.is_some() {
        Ok(bundle)
    } else {
        bundle.without_compass()
    }
}
