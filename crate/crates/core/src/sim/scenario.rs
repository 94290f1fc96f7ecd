use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::controller::PurePursuit;
use super::raycast::simulate_scan;
use super::sensors::{seeded_rng, simulate_compass, simulate_encoders, SimRng};
use super::{SimConfig, World};
use crate::geometry::Scan;
use crate::kinematics::{motion_model, Pose, WheelRates};
use crate::{Error, Result};

/// Everything recorded at one sample instant. The pose and sensor readings
/// are taken after the commanded rates have been applied for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct SimStep {
    pub k: usize,
    pub true_pose: Pose,
    pub cmd: WheelRates,
    pub meas: WheelRates,
    pub phi: f64,
    pub scan: Scan,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimLog {
    pub steps: Vec<SimStep>,
    /// The robot left the world before the configured duration elapsed.
    pub truncated: bool,
}

impl SimLog {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn true_poses(&self) -> Vec<Pose> {
        self.steps.iter().map(|s| s.true_pose).collect()
    }
}

/// Ground-truth stepper. Owns the true pose and the random stream.
///
/// Per step the draws are: two for the encoders, one for the compass, then
/// two per range-finder beam.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    world: World,
    pose: Pose,
    rng: SimRng,
    k: usize,
}

impl Simulator {
    pub fn new(config: SimConfig, world: World) -> Result<Self> {
        config.validate()?;
        if !world.contains(&config.initial_pose) {
            let p = config.initial_pose;
            return Err(Error::InvalidPose { x: p.x, y: p.y });
        }
        Ok(Self {
            pose: config.initial_pose,
            rng: seeded_rng(config.seed),
            config,
            world,
            k: 0,
        })
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    /// A scan from the current pose without moving. Consumes draws, so call
    /// it before the first step if at all.
    pub fn observe(&mut self) -> Result<Scan> {
        simulate_scan(
            &self.world,
            &self.pose,
            &self.config.lrf,
            &self.config.noise,
            &mut self.rng,
        )
    }

    /// Applies `cmd` for one period and samples every sensor at the new pose.
    /// Fails with `InvalidPose` once the robot is no longer inside the world.
    pub fn advance(&mut self, cmd: WheelRates) -> Result<SimStep> {
        let c = &self.config;
        let meas = simulate_encoders(cmd, c.noise.delta, &mut self.rng);
        let pose = motion_model(&self.pose, cmd, &c.geom, c.dt);
        if !self.world.contains(&pose) {
            return Err(Error::InvalidPose { x: pose.x, y: pose.y });
        }
        self.pose = pose;
        let phi = simulate_compass(pose.theta, c.noise.compass_var, &mut self.rng);
        let scan = simulate_scan(&self.world, &pose, &c.lrf, &c.noise, &mut self.rng)?;
        let step = SimStep {
            k: self.k,
            true_pose: pose,
            cmd,
            meas,
            phi,
            scan,
        };
        self.k += 1;
        Ok(step)
    }
}

/// Drives the robot along `path` with pure pursuit on the true pose for
/// `config.duration` steps. Leaving the world ends the log early with
/// `truncated` set.
pub fn run_scenario(config: &SimConfig, world: &World, path: &[Point2<f64>]) -> Result<SimLog> {
    let mut sim = Simulator::new(*config, world.clone())?;
    let mut pursuit = PurePursuit::new(path.to_vec(), config.controller)?;
    let mut log = SimLog {
        steps: Vec::with_capacity(config.duration),
        truncated: false,
    };
    for _ in 0..config.duration {
        let cmd = pursuit.command(&sim.pose(), &config.geom);
        match sim.advance(cmd) {
            Ok(step) => log.steps.push(step),
            Err(Error::InvalidPose { .. }) => {
                log.truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(log)
}

#[derive(Serialize, Deserialize)]
struct ScanRecord {
    bearings: Vec<f64>,
    ranges: Vec<f64>,
    valid: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct StepRecord {
    k: usize,
    #[serde(rename = "true")]
    true_pose: [f64; 3],
    cmd: [f64; 2],
    meas: [f64; 2],
    phi: f64,
    scan: ScanRecord,
}

/// Writes one JSON object per step. The truncation flag is not stored.
pub fn write_simlog(log: &SimLog, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for s in &log.steps {
        let rec = StepRecord {
            k: s.k,
            true_pose: s.true_pose.to_array(),
            cmd: [s.cmd.omega_l, s.cmd.omega_r],
            meas: [s.meas.omega_l, s.meas.omega_r],
            phi: s.phi,
            scan: ScanRecord {
                bearings: s.scan.bearings().to_vec(),
                ranges: s.scan.ranges().to_vec(),
                valid: s.scan.valid().to_vec(),
            },
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a log written by [`write_simlog`]. `max_range` is the sensor limit
/// the scans were taken with.
pub fn read_simlog(path: &Path, max_range: f64) -> Result<SimLog> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut steps = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let rec: StepRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let scan = Scan::new(rec.scan.bearings, rec.scan.ranges, rec.scan.valid, max_range)
            .map_err(|e| parse_err(e.to_string()))?;
        let [x, y, th] = rec.true_pose;
        steps.push(SimStep {
            k: rec.k,
            true_pose: Pose { x, y, theta: th },
            cmd: WheelRates::new(rec.cmd[0], rec.cmd[1]),
            meas: WheelRates::new(rec.meas[0], rec.meas[1]),
            phi: rec.phi,
            scan,
        });
    }
    Ok(SimLog {
        steps,
        truncated: false,
    })
}
