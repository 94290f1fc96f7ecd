use std::f64::consts::FRAC_PI_4;
use std::path::Path;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::output::{write_step_reports, write_trajectory};
use super::HarnessConfig;
use crate::ekf::{EstimatorMode, FilterConfig, Localizer, StepInput, StepReport};
use crate::geometry::{extract_lines, write_map, LineNF, LocalLine, Scan};
use crate::kinematics::Pose;
use crate::sim::{inset_loop, PurePursuit, SimConfig, Simulator, World};
use crate::{Error, Result};

/// Closed-loop round trip around the room on a self-built map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WallFollowSpec {
    /// Distance kept from the walls (m).
    pub offset: f64,
    pub corner_radius: f64,
    /// Start pose; overrides the simulator's.
    pub initial_pose: Pose,
    /// Give up after this many steps.
    pub max_steps: usize,
}

impl Default for WallFollowSpec {
    /// Starts on the rounded corner nearest the origin, facing into the
    /// room so that the first 180 degree scan sees all four walls.
    fn default() -> Self {
        let c = 1.0 - 0.5 * FRAC_PI_4.cos();
        Self {
            offset: 0.5,
            corner_radius: 0.5,
            initial_pose: Pose::new(c, c, FRAC_PI_4),
            max_steps: 3000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WallFollowReport {
    /// Lines extracted from the first scan, in the scanner frame.
    pub first_scan_lines: Vec<LocalLine>,
    /// The same lines in the global frame: the map used for localization.
    pub map: Vec<LineNF>,
    pub path: Vec<Point2<f64>>,
    pub truth: Vec<Pose>,
    pub estimates: Vec<Pose>,
    pub reports: Vec<StepReport>,
    /// Estimator whose output steered the robot.
    pub feedback: EstimatorMode,
    pub start: Pose,
    /// The controller reached the end of the loop within `max_steps`.
    pub completed: bool,
    /// True distance between the final and the start position.
    pub final_distance: f64,
}

/// Builds a map from the first scan at the known start pose, plans a loop
/// `offset` inside the mapped walls and drives it with the fully fused
/// estimate as feedback.
///
/// Files under `out_dir`: `first_scan.csv`, `map.txt`, `path.csv`,
/// `truth.csv`, `estimate.csv`, `steps.jsonl`.
pub fn wall_follow_scenario(config: &HarnessConfig, world: &World, out_dir: Option<&Path>) -> Result<WallFollowReport> {
    let spec = config.wall_follow;
    let sim_cfg = SimConfig {
        initial_pose: spec.initial_pose,
        ..config.sim
    };
    let filter = FilterConfig {
        mode: EstimatorMode::EkfFull,
        ..config.filter
    };
    let mut sim = Simulator::new(sim_cfg, world.clone())?;
    let start = sim.pose();

    let first: Scan = sim.observe()?;
    let first_scan_lines = extract_lines(&first, &filter.extraction_params(&sim_cfg.noise));
    if first_scan_lines.len() < 3 {
        return Err(Error::ScenarioAborted(format!(
            "first scan yielded {} lines, need at least 3 to build a map",
            first_scan_lines.len()
        )));
    }
    let map = first_scan_lines
        .iter()
        .map(|l| l.to_global(&start))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::ScenarioAborted(format!("could not lift first-scan lines: {e}")))?;
    let path = inset_loop(&map, &start, spec.offset, spec.corner_radius)
        .map_err(|e| Error::ScenarioAborted(format!("no loop inside the mapped walls: {e}")))?;

    let mut pursuit = PurePursuit::new(path.clone(), sim_cfg.controller)?;
    let mut loc = Localizer::new(
        config.initial_estimate(start),
        map.clone(),
        sim_cfg.geom,
        sim_cfg.dt,
        sim_cfg.noise,
        filter,
    );
    let (mut truth, mut estimates, mut reports) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..spec.max_steps {
        let cmd = pursuit.command(&loc.state().mean, &sim_cfg.geom);
        if pursuit.is_finished() {
            break;
        }
        let step = sim.advance(cmd).map_err(|e| match e {
            Error::InvalidPose { x, y } => Error::ScenarioAborted(format!("robot left the room at ({x:.3}, {y:.3})")),
            e => e,
        })?;
        reports.push(loc.step(StepInput {
            rates: step.meas,
            scan: Some(&step.scan),
            compass_phi: Some(step.phi),
        }));
        truth.push(step.true_pose);
        estimates.push(loc.state().mean);
    }
    let end = truth.last().copied().unwrap_or(start);
    let report = WallFollowReport {
        first_scan_lines,
        map,
        path,
        truth,
        estimates,
        reports,
        feedback: loc.mode(),
        start,
        completed: pursuit.is_finished(),
        final_distance: end.distance_to(&start),
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        first.write_csv(&dir.join("first_scan.csv"))?;
        write_map(&dir.join("map.txt"), &report.map)?;
        let path_poses: Vec<Pose> = report
            .path
            .iter()
            .map(|p| Pose {
                x: p.x,
                y: p.y,
                theta: 0.0,
            })
            .collect();
        write_trajectory(&dir.join("path.csv"), &path_poses)?;
        write_trajectory(&dir.join("truth.csv"), &report.truth)?;
        write_trajectory(&dir.join("estimate.csv"), &report.estimates)?;
        write_step_reports(&dir.join("steps.jsonl"), &report.reports)?;
    }
    Ok(report)
}
