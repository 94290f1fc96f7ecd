use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ekf::StepReport;
use crate::kinematics::Pose;
use crate::{Error, Result};

/// CSV row `k,x,y,theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub k: usize,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

pub fn write_trajectory(path: &Path, poses: &[Pose]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (k, p) in poses.iter().enumerate() {
        w.serialize(TrajectoryRow {
            k,
            x: p.x,
            y: p.y,
            theta: p.theta,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<Pose>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<TrajectoryRow>()
        .map(|row| {
            let row = row?;
            Ok(Pose {
                x: row.x,
                y: row.y,
                theta: row.theta,
            })
        })
        .collect()
}

pub fn write_step_reports(path: &Path, reports: &[StepReport]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_step_reports(path: &Path) -> Result<Vec<StepReport>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
