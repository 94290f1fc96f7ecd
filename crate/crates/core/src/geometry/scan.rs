use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::scan_point;
use crate::{Error, Result};

/// One sweep of the range finder.
///
/// Bearings are measured from the robot heading and strictly increase across
/// the 180 degree field of view. Samples without a return are flagged
/// invalid; their stored range is `max_range` and must not be used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    bearings: Vec<f64>,
    ranges: Vec<f64>,
    valid: Vec<bool>,
    max_range: f64,
}

/// CSV row `bearing_rad,range_m,valid`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub bearing_rad: f64,
    pub range_m: f64,
    pub valid: u8,
}

impl Scan {
    pub fn new(bearings: Vec<f64>, ranges: Vec<f64>, valid: Vec<bool>, max_range: f64) -> Result<Self> {
        if bearings.len() != ranges.len() || bearings.len() != valid.len() {
            return Err(Error::InvalidArgument(format!(
                "scan columns differ in length: {} bearings, {} ranges, {} flags",
                bearings.len(),
                ranges.len(),
                valid.len()
            )));
        }
        if !(max_range > 0.0 && max_range.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "max_range must be positive, got {max_range}"
            )));
        }
        // Tiny slack so bearings generated as -fov/2 + i*step still pass.
        let limit = FRAC_PI_2 + 1e-9;
        for (i, b) in bearings.iter().enumerate() {
            if !(b.abs() <= limit) {
                return Err(Error::InvalidArgument(format!(
                    "bearing {b} at index {i} is outside the field of view"
                )));
            }
            if i > 0 && !(bearings[i - 1] < *b) {
                return Err(Error::InvalidArgument(format!(
                    "bearings must strictly increase (index {i})"
                )));
            }
        }
        for (i, (&r, &ok)) in ranges.iter().zip(&valid).enumerate() {
            if ok && !(r > 0.0 && r <= max_range) {
                return Err(Error::InvalidArgument(format!(
                    "valid range {r} at index {i} is outside (0, {max_range}]"
                )));
            }
        }
        Ok(Self {
            bearings,
            ranges,
            valid,
            max_range,
        })
    }

    /// A scan that saw nothing.
    pub fn empty(max_range: f64) -> Self {
        Self {
            bearings: Vec::new(),
            ranges: Vec::new(),
            valid: Vec::new(),
            max_range,
        }
    }

    /// Builds a scan from optional ranges; `None` marks a missing return.
    pub fn from_samples(bearings: Vec<f64>, ranges: &[Option<f64>], max_range: f64) -> Result<Self> {
        let valid = ranges.iter().map(Option::is_some).collect();
        let ranges = ranges.iter().map(|r| r.unwrap_or(max_range)).collect();
        Self::new(bearings, ranges, valid, max_range)
    }

    pub fn len(&self) -> usize {
        self.bearings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bearings.is_empty()
    }

    pub fn bearings(&self) -> &[f64] {
        &self.bearings
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn max_range(&self) -> f64 {
        self.max_range
    }

    pub fn range(&self, i: usize) -> Option<f64> {
        self.valid[i].then_some(self.ranges[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// `(index, scanner-frame point)` for every valid sample.
    pub fn points(&self) -> impl Iterator<Item = (usize, Point2<f64>)> + '_ {
        (0..self.len()).filter_map(move |i| self.range(i).map(|r| (i, scan_point(self.bearings[i], r))))
    }

    pub fn rows(&self) -> impl Iterator<Item = ScanRow> + '_ {
        (0..self.len()).map(move |i| ScanRow {
            bearing_rad: self.bearings[i],
            range_m: self.ranges[i],
            valid: u8::from(self.valid[i]),
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a scan CSV. The file has no max-range column, so the caller supplies it.
    pub fn read_csv(path: &Path, max_range: f64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let (mut bearings, mut ranges, mut valid) = (Vec::new(), Vec::new(), Vec::new());
        for row in r.deserialize() {
            let row: ScanRow = row?;
            bearings.push(row.bearing_rad);
            ranges.push(row.range_m);
            valid.push(row.valid != 0);
        }
        Self::new(bearings, ranges, valid, max_range)
    }
}
