//! Plain-text wall maps: one wall per line, `rho beta x1 y1 x2 y2`, with `#`
//! starting a comment.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point2;

use super::LineNF;
use crate::{Error, Result};

/// Endpoints further than this from the stated line are rejected; closer ones
/// are snapped onto it.
const ENDPOINT_SLACK: f64 = 1e-3;

pub fn parse_map(text: &str, origin: &Path) -> Result<Vec<LineNF>> {
    let mut walls = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let fields = content
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(e.to_string()))?;
        let [rho, beta, x1, y1, x2, y2] = fields[..] else {
            return Err(parse_err(format!("expected 6 fields, found {}", fields.len())));
        };
        let (a, b) = (Point2::new(x1, y1), Point2::new(x2, y2));
        // Keep endpoints that already lie on the line bit for bit, so maps
        // written by `format_map` read back unchanged.
        let wall = match LineNF::new(rho, beta, a, b) {
            Ok(w) => w,
            Err(_) => LineNF::from_params_snapped(rho, beta, a, b).map_err(|e| parse_err(e.to_string()))?,
        };
        for (p, q) in [
            (Point2::new(x1, y1), wall.seg_start),
            (Point2::new(x2, y2), wall.seg_end),
        ] {
            if (p - q).norm() > ENDPOINT_SLACK {
                return Err(parse_err(format!("endpoint ({x1}, {y1}) is not on the line")));
            }
        }
        walls.push(wall);
    }
    Ok(walls)
}

pub fn format_map(walls: &[LineNF]) -> String {
    let mut out = String::from("# rho beta x1 y1 x2 y2\n");
    for w in walls {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            w.rho, w.beta, w.seg_start.x, w.seg_start.y, w.seg_end.x, w.seg_end.y
        );
    }
    out
}

pub fn read_map(path: &Path) -> Result<Vec<LineNF>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_map(&text, path)
}

pub fn write_map(path: &Path, walls: &[LineNF]) -> Result<()> {
    std::fs::write(path, format_map(walls)).map_err(|e| Error::io(path, e))
}
