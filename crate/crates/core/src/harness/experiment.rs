use std::path::{Path, PathBuf};

use nalgebra::Point2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::output::{write_step_reports, write_trajectory};
use super::{compute_deviation, run_estimator, DeviationReport, HarnessConfig};
use crate::ekf::{EstimatorMode, FilterConfig};
use crate::sim::{inset_loop, run_scenario, write_simlog, SimConfig, World};
use crate::{Error, Result};

/// One Monte Carlo experiment: a scenario, an estimator, a seed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    /// Only `rounded-rectangle` exists: a loop inset from the walls around
    /// the start pose.
    pub scenario: String,
    pub mode: EstimatorMode,
    pub monte_carlo_runs: usize,
    /// Run `i` uses seed `seed + i`.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Distance of the reference loop from the walls (m).
    pub path_inset: f64,
    pub corner_radius: f64,
    /// Also store every run's full simulation log.
    pub write_logs: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scenario: "rounded-rectangle".into(),
            mode: EstimatorMode::EkfFull,
            monte_carlo_runs: 20,
            seed: 0,
            out_dir: PathBuf::from("out"),
            path_inset: 1.0,
            corner_radius: 0.75,
            write_logs: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.scenario != "rounded-rectangle" {
            return Err(Error::InvalidArgument(format!("unknown scenario '{}'", self.scenario)));
        }
        if self.monte_carlo_runs == 0 {
            return Err(Error::InvalidArgument("monte_carlo_runs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.monte_carlo_runs as u64).map(|i| self.seed.wrapping_add(i))
    }
}

/// Reference path of the scenario for a world and start pose.
pub fn reference_path(spec: &ExperimentSpec, world: &World, sim: &SimConfig) -> Result<Vec<Point2<f64>>> {
    spec.validate()?;
    inset_loop(&world.walls, &sim.initial_pose, spec.path_inset, spec.corner_radius)
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub mode: EstimatorMode,
    pub steps: usize,
    pub truncated: bool,
    pub rmse_position: f64,
    pub rmse_heading: f64,
    pub final_position_error: f64,
    pub final_heading_error: f64,
    /// Steps whose correction was refused or downgraded.
    pub degraded_steps: usize,
}

/// One line of `summary_stats.csv`: sample mean and standard deviation of a
/// per-run metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub runs: Vec<RunSummary>,
    pub deviations: Vec<DeviationReport>,
    pub stats: Vec<StatRow>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn stats(runs: &[RunSummary]) -> Vec<StatRow> {
    type Metric = (&'static str, fn(&RunSummary) -> f64);
    let metrics: [Metric; 4] = [
        ("rmse_position", |r| r.rmse_position),
        ("rmse_heading", |r| r.rmse_heading),
        ("final_position_error", |r| r.final_position_error),
        ("final_heading_error", |r| r.final_heading_error),
    ];
    metrics
        .iter()
        .map(|(name, f)| {
            let (mean, std) = mean_std(&runs.iter().map(f).collect::<Vec<_>>());
            StatRow {
                metric: name.to_string(),
                mean,
                std,
            }
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Runs `config.experiment`: for each seed, simulate the scenario, replay it
/// through the chosen estimator against the true wall map, and measure the
/// deviation. Runs execute in parallel; every file depends only on its run,
/// so the output is byte-identical across re-runs.
///
/// Files under `out_dir` (skipped when `out_dir` is `None`):
/// `run_NNN/{truth,estimate}.csv`, `run_NNN/steps.jsonl`, optionally
/// `run_NNN/simlog.jsonl`, then `summary.csv` and `summary_stats.csv`.
pub fn run_experiment(
    config: &HarnessConfig,
    world: &World,
    path: &[Point2<f64>],
    out_dir: Option<&Path>,
) -> Result<ExperimentReport> {
    let spec = &config.experiment;
    spec.validate()?;
    config.sim.validate()?;
    if let Some(dir) = out_dir {
        create_dir(dir)?;
    }
    let filter = FilterConfig {
        mode: spec.mode,
        ..config.filter
    };
    let seeds: Vec<u64> = spec.seeds().collect();
    let results = seeds
        .par_iter()
        .enumerate()
        .map(|(run, &seed)| -> Result<(RunSummary, DeviationReport)> {
            let sim = SimConfig { seed, ..config.sim };
            let log = run_scenario(&sim, world, path)?;
            let initial = config.initial_estimate(sim.initial_pose);
            let est = run_estimator(&log, &world.walls, &sim, &filter, initial);
            let truth = log.true_poses();
            let dev = compute_deviation(&est.estimates, &truth)?;
            if let Some(dir) = out_dir {
                let rd = dir.join(format!("run_{run:03}"));
                create_dir(&rd)?;
                write_trajectory(&rd.join("truth.csv"), &truth)?;
                write_trajectory(&rd.join("estimate.csv"), &est.estimates)?;
                write_step_reports(&rd.join("steps.jsonl"), &est.reports)?;
                if spec.write_logs {
                    write_simlog(&log, &rd.join("simlog.jsonl"))?;
                }
            }
            let summary = RunSummary {
                run,
                seed,
                mode: spec.mode,
                steps: log.len(),
                truncated: log.truncated,
                rmse_position: dev.rmse_position,
                rmse_heading: dev.rmse_heading,
                final_position_error: dev.final_position_error,
                final_heading_error: dev.final_heading_error,
                degraded_steps: est.degraded_steps(),
            };
            Ok((summary, dev))
        })
        .collect::<Result<Vec<_>>>()?;
    let (runs, deviations): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let stats = stats(&runs);
    if let Some(dir) = out_dir {
        write_csv(&dir.join("summary.csv"), &runs)?;
        write_csv(&dir.join("summary_stats.csv"), &stats)?;
    }
    Ok(ExperimentReport {
        runs,
        deviations,
        stats,
    })
}

/// Final position errors of all four estimators on shared logs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeComparison {
    pub seeds: Vec<u64>,
    /// `final_errors[i][run]` for mode `EstimatorMode::ALL[i]`.
    pub final_errors: [Vec<f64>; 4],
}

impl ModeComparison {
    pub fn errors(&self, mode: EstimatorMode) -> &[f64] {
        let i = EstimatorMode::ALL.iter().position(|m| *m == mode).unwrap();
        &self.final_errors[i]
    }

    pub fn mean(&self, mode: EstimatorMode) -> f64 {
        mean_std(self.errors(mode)).0
    }

    /// Number of runs in which `a` ended strictly closer to the truth than `b`.
    pub fn wins(&self, a: EstimatorMode, b: EstimatorMode) -> usize {
        self.errors(a).iter().zip(self.errors(b)).filter(|(x, y)| x < y).count()
    }
}

/// Simulates each seed once and replays the same log through every
/// estimator, so the modes are compared on identical sensor data.
pub fn compare_modes(config: &HarnessConfig, world: &World, path: &[Point2<f64>]) -> Result<ModeComparison> {
    let spec = &config.experiment;
    spec.validate()?;
    config.sim.validate()?;
    let seeds: Vec<u64> = spec.seeds().collect();
    let per_run = seeds
        .par_iter()
        .map(|&seed| -> Result<[f64; 4]> {
            let sim = SimConfig { seed, ..config.sim };
            let log = run_scenario(&sim, world, path)?;
            let truth = log.true_poses();
            let mut out = [0.0; 4];
            for (slot, mode) in out.iter_mut().zip(EstimatorMode::ALL) {
                let filter = FilterConfig { mode, ..config.filter };
                let est = run_estimator(
                    &log,
                    &world.walls,
                    &sim,
                    &filter,
                    config.initial_estimate(sim.initial_pose),
                );
                *slot = compute_deviation(&est.estimates, &truth)?.final_position_error;
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut final_errors: [Vec<f64>; 4] = Default::default();
    for run in &per_run {
        for (col, v) in final_errors.iter_mut().zip(run) {
            col.push(*v);
        }
    }
    Ok(ModeComparison { seeds, final_errors })
}
