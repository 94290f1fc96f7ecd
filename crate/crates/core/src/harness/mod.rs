//! Experiment runner: replays simulated logs through the estimators,
//! measures deviation from ground truth and writes plot-ready files.

mod experiment;
mod output;
mod wall_follow;

pub use experiment::{
    compare_modes, reference_path, run_experiment, ExperimentReport, ExperimentSpec, ModeComparison, RunSummary,
    StatRow,
};
pub use output::{read_step_reports, read_trajectory, write_step_reports, write_trajectory, TrajectoryRow};
pub use wall_follow::{wall_follow_scenario, WallFollowReport, WallFollowSpec};

use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::angle::angle_diff;
use crate::ekf::{FilterConfig, Localizer, StateEstimate, StepInput, StepReport};
use crate::geometry::{read_map, LineNF};
use crate::kinematics::Pose;
use crate::sim::{SimConfig, SimLog, World};
use crate::{Error, Result};

/// The single JSON document accepted by `--config`. Every section and field
/// is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub sim: SimConfig,
    pub filter: FilterConfig,
    pub experiment: ExperimentSpec,
    pub wall_follow: WallFollowSpec,
    /// Standard deviations of the initial estimate around the true start
    /// pose; zero means exact initialization.
    pub initial_std: [f64; 3],
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })
    }

    pub fn initial_estimate(&self, pose: Pose) -> StateEstimate {
        let [sx, sy, st] = self.initial_std;
        StateEstimate::new(pose, Matrix3::from_diagonal(&[sx * sx, sy * sy, st * st].into()))
    }
}

/// Loads a world from a map file.
pub fn load_world(path: &Path) -> Result<World> {
    World::new(read_map(path)?)
}

/// Differences between an estimated and a true trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    /// Wrapped heading error.
    pub dtheta: Vec<f64>,
    pub rmse_position: f64,
    pub rmse_heading: f64,
    pub final_position_error: f64,
    pub final_heading_error: f64,
}

impl DeviationReport {
    pub fn len(&self) -> usize {
        self.dx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dx.is_empty()
    }
}

/// Element-wise `estimated - truth` with the heading wrapped, plus RMSE.
/// Empty trajectories give an empty report with zero errors.
pub fn compute_deviation(estimated: &[Pose], truth: &[Pose]) -> Result<DeviationReport> {
    if estimated.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "trajectory lengths differ: {} estimated, {} true",
            estimated.len(),
            truth.len()
        )));
    }
    let n = estimated.len();
    let mut r = DeviationReport {
        dx: Vec::with_capacity(n),
        dy: Vec::with_capacity(n),
        dtheta: Vec::with_capacity(n),
        rmse_position: 0.0,
        rmse_heading: 0.0,
        final_position_error: 0.0,
        final_heading_error: 0.0,
    };
    let (mut sp, mut sh) = (0.0, 0.0);
    for (e, t) in estimated.iter().zip(truth) {
        let (dx, dy, dth) = (e.x - t.x, e.y - t.y, angle_diff(e.theta, t.theta));
        sp += dx * dx + dy * dy;
        sh += dth * dth;
        r.dx.push(dx);
        r.dy.push(dy);
        r.dtheta.push(dth);
    }
    if n > 0 {
        r.rmse_position = (sp / n as f64).sqrt();
        r.rmse_heading = (sh / n as f64).sqrt();
        r.final_position_error = r.dx[n - 1].hypot(r.dy[n - 1]);
        r.final_heading_error = r.dtheta[n - 1].abs();
    }
    Ok(r)
}

/// Output of one estimator pass over a log.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRun {
    pub estimates: Vec<Pose>,
    pub reports: Vec<StepReport>,
}

impl EstimatorRun {
    /// Steps whose correction was refused or downgraded.
    pub fn degraded_steps(&self) -> usize {
        self.reports.iter().filter(|r| r.degraded()).count()
    }
}

/// Replays `log` through the estimator selected by `filter.mode`.
pub fn run_estimator(
    log: &SimLog,
    map: &[LineNF],
    sim: &SimConfig,
    filter: &FilterConfig,
    initial: StateEstimate,
) -> EstimatorRun {
    let mut loc = Localizer::new(initial, map.to_vec(), sim.geom, sim.dt, sim.noise, *filter);
    let mut run = EstimatorRun {
        estimates: Vec::with_capacity(log.len()),
        reports: Vec::with_capacity(log.len()),
    };
    for s in &log.steps {
        let report = loc.step(StepInput {
            rates: s.meas,
            scan: Some(&s.scan),
            compass_phi: Some(s.phi),
        });
        run.estimates.push(loc.state().mean);
        run.reports.push(report);
    }
    run
}
