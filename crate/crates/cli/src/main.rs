//! `linefusion`: simulate scenarios, replay logs through the estimators and
//! run Monte Carlo experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O or file format error,
//! 3 scenario aborted.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use linefusion::ekf::EstimatorMode;
use linefusion::geometry::write_map;
use linefusion::harness::{
    compute_deviation, load_world, reference_path, run_estimator, run_experiment, wall_follow_scenario,
    write_step_reports, write_trajectory, HarnessConfig,
};
use linefusion::sim::{read_simlog, run_scenario, write_simlog, World};
use linefusion::Error;

#[derive(Parser)]
#[command(
    name = "linefusion",
    version,
    about = "EKF localization experiments on simulated line-feature rooms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration (sections: sim, filter, experiment, wall_follow, initial_std).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// World map file (`rho beta x1 y1 x2 y2` per wall); default 8 m x 6 m room.
    #[arg(long, value_name = "FILE")]
    world: Option<PathBuf>,
    /// Base random seed; overrides the configuration.
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one run and store its log.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Replay a stored log through an estimator.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Log written by `simulate`.
        #[arg(long, value_name = "FILE")]
        log: PathBuf,
        /// odom, ekf-compass, ekf-lrf or ekf-full.
        #[arg(long, value_name = "MODE")]
        mode: Option<EstimatorMode>,
    },
    /// Monte Carlo runs of one estimator, or of each with `--mode all`.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// odom, ekf-compass, ekf-lrf, ekf-full or all.
        #[arg(long, value_name = "MODE")]
        mode: Option<String>,
        /// Number of Monte Carlo runs; overrides the configuration.
        #[arg(long, value_name = "N")]
        runs: Option<usize>,
    },
    /// Map the room from the first scan and drive a loop along the walls.
    Wallfollow {
        #[command(flatten)]
        common: Common,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 1,
        Error::Io { .. } | Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => 2,
        _ => 3,
    }
}

struct Setup {
    config: HarnessConfig,
    world: World,
    out: PathBuf,
}

fn setup(common: &Common) -> linefusion::Result<Setup> {
    let mut config = match &common.config {
        Some(p) => HarnessConfig::load(p)?,
        None => HarnessConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.sim.seed = seed;
        config.experiment.seed = seed;
    }
    let world = match &common.world {
        Some(p) => load_world(p)?,
        None => World::default(),
    };
    let out = common.out.clone().unwrap_or_else(|| config.experiment.out_dir.clone());
    std::fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    Ok(Setup { config, world, out })
}

fn simulate(common: &Common) -> linefusion::Result<()> {
    let s = setup(common)?;
    let path = reference_path(&s.config.experiment, &s.world, &s.config.sim)?;
    let log = run_scenario(&s.config.sim, &s.world, &path)?;
    write_simlog(&log, &s.out.join("simlog.jsonl"))?;
    write_trajectory(&s.out.join("truth.csv"), &log.true_poses())?;
    write_map(&s.out.join("world.txt"), &s.world.walls)?;
    println!("steps: {}", log.len());
    if log.truncated {
        println!("truncated: robot left the world");
    }
    Ok(())
}

fn estimate(common: &Common, log_path: &Path, mode: Option<EstimatorMode>) -> linefusion::Result<()> {
    let s = setup(common)?;
    let log = read_simlog(log_path, s.config.sim.lrf.max_range)?;
    let mut filter = s.config.filter;
    filter.mode = mode.unwrap_or(s.config.experiment.mode);
    let initial = s.config.initial_estimate(s.config.sim.initial_pose);
    let run = run_estimator(&log, &s.world.walls, &s.config.sim, &filter, initial);
    let truth = log.true_poses();
    let dev = compute_deviation(&run.estimates, &truth)?;
    write_trajectory(&s.out.join("truth.csv"), &truth)?;
    write_trajectory(&s.out.join("estimate.csv"), &run.estimates)?;
    write_step_reports(&s.out.join("steps.jsonl"), &run.reports)?;
    println!("mode: {}", filter.mode);
    println!("steps: {}", dev.len());
    println!("rmse_position: {:.6}", dev.rmse_position);
    println!("rmse_heading: {:.6}", dev.rmse_heading);
    println!("final_position_error: {:.6}", dev.final_position_error);
    println!("degraded_steps: {}", run.degraded_steps());
    Ok(())
}

fn experiment(common: &Common, mode: Option<&str>, runs: Option<usize>) -> linefusion::Result<()> {
    let mut s = setup(common)?;
    if let Some(n) = runs {
        s.config.experiment.monte_carlo_runs = n;
    }
    let modes: Vec<EstimatorMode> = match mode {
        Some("all") => EstimatorMode::ALL.to_vec(),
        Some(m) => vec![m.parse()?],
        None => vec![s.config.experiment.mode],
    };
    let path = reference_path(&s.config.experiment, &s.world, &s.config.sim)?;
    for m in &modes {
        let mut config = s.config.clone();
        config.experiment.mode = *m;
        let dir = if modes.len() > 1 {
            s.out.join(m.as_str())
        } else {
            s.out.clone()
        };
        let report = run_experiment(&config, &s.world, &path, Some(&dir))?;
        for row in &report.stats {
            println!("{m} {} mean={:.6} std={:.6}", row.metric, row.mean, row.std);
        }
        let truncated = report.runs.iter().filter(|r| r.truncated).count();
        if truncated > 0 {
            println!("{m} truncated_runs={truncated}");
        }
    }
    Ok(())
}

fn wallfollow(common: &Common) -> linefusion::Result<()> {
    let s = setup(common)?;
    let report = wall_follow_scenario(&s.config, &s.world, Some(&s.out))?;
    println!("map_lines: {}", report.map.len());
    println!("feedback: {}", report.feedback);
    println!("steps: {}", report.truth.len());
    println!("completed: {}", report.completed);
    println!("final_distance: {:.6}", report.final_distance);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Simulate { common } => simulate(common),
        Command::Estimate { common, log, mode } => estimate(common, log, *mode),
        Command::Experiment { common, mode, runs } => experiment(common, mode.as_deref(), *runs),
        Command::Wallfollow { common } => wallfollow(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
