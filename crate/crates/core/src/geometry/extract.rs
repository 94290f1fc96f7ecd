//! Split-and-merge line extraction with weighted total-least-squares fits.
//!
//! Each scan point carries a perpendicular noise level built from the range
//! noise (projected onto the line normal) and the bearing jitter (lever arm
//! times the tangential component). Fits minimise the weighted orthogonal
//! residual and report the first-order parameter covariance.

use nalgebra::{Matrix2, Point2};
use serde::{Deserialize, Serialize};

use super::Scan;
use crate::angle::{angle_diff, wrap_angle};

/// Tuning for [`extract_lines`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionParams {
    /// 1-sigma range noise of the scanner (m).
    pub range_sigma: f64,
    /// 1-sigma bearing jitter of the scanner (rad).
    pub bearing_sigma: f64,
    /// Lower bound on the per-point perpendicular sigma used for weights and
    /// covariance. Keeps noiseless scans from producing singular fits.
    pub sigma_floor: f64,
    /// Minimum chord deviation (m) that splits a segment.
    pub split_threshold: f64,
    /// A point also needs to deviate by this many of its own sigmas to split.
    pub split_sigmas: f64,
    /// Largest accepted weighted RMS orthogonal residual (m).
    pub max_residual: f64,
    pub min_points: usize,
    /// Consecutive points further apart than this start a new run (m).
    pub max_point_gap: f64,
    /// Chi-square bound (2 dof) for merging adjacent segments. 5.991 is 95%.
    pub merge_chi2: f64,
    /// End points further than this many sigmas off the fit are trimmed.
    pub trim_sigmas: f64,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            range_sigma: 0.0,
            bearing_sigma: 0.0,
            sigma_floor: 1e-3,
            split_threshold: 0.03,
            split_sigmas: 5.0,
            max_residual: 0.02,
            min_points: 6,
            max_point_gap: 1.0,
            merge_chi2: 5.991,
            trim_sigmas: 3.0,
        }
    }
}

impl ExtractionParams {
    /// Defaults adapted to a scanner with the given noise levels. The residual
    /// acceptance widens with the range noise so that correct fits of noisy
    /// walls are not rejected.
    pub fn for_noise(range_sigma: f64, bearing_sigma: f64) -> Self {
        let base = Self::default();
        Self {
            range_sigma,
            bearing_sigma,
            max_residual: base.max_residual.max(2.0 * range_sigma),
            ..base
        }
    }

    /// Perpendicular noise sigma of a scanner-frame point against a line with
    /// normal angle `psi`, without the floor.
    pub fn point_sigma(&self, p: &Point2<f64>, psi: f64) -> f64 {
        let d = p.coords.norm();
        let phi = p.y.atan2(p.x);
        let (s, c) = (phi - psi).sin_cos();
        ((self.range_sigma * c).powi(2) + (d * self.bearing_sigma * s).powi(2)).sqrt()
    }

    fn weight(&self, p: &Point2<f64>, psi: Option<f64>) -> f64 {
        let sigma = match psi {
            Some(psi) => self.point_sigma(p, psi),
            None => self.range_sigma.hypot(p.coords.norm() * self.bearing_sigma),
        };
        1.0 / sigma.max(self.sigma_floor).powi(2)
    }
}

/// A weighted line fit in scanner-frame normal form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub r: f64,
    pub psi: f64,
    /// Covariance of `(r, psi)`.
    pub cov: Matrix2<f64>,
    /// Weighted RMS orthogonal residual (m).
    pub rms: f64,
}

impl LineFit {
    pub fn residual(&self, p: &Point2<f64>) -> f64 {
        p.x * self.psi.cos() + p.y * self.psi.sin() - self.r
    }

    fn project(&self, p: &Point2<f64>) -> Point2<f64> {
        let e = self.residual(p);
        Point2::new(p.x - e * self.psi.cos(), p.y - e * self.psi.sin())
    }
}

/// A line extracted from one scan, in the scanner frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalLine {
    pub r: f64,
    pub psi: f64,
    /// Covariance of `(r, psi)` from the weighted fit.
    pub cov: Matrix2<f64>,
    pub support_count: usize,
    /// First and last scan index of the supporting points.
    pub point_span: (usize, usize),
    /// Supporting end points projected onto the line (scanner frame).
    pub first_point: Point2<f64>,
    pub last_point: Point2<f64>,
    pub rms: f64,
}

impl LocalLine {
    /// A synthetic observation with no supporting points, for callers that
    /// already have line parameters.
    pub fn from_params(r: f64, psi: f64, cov: Matrix2<f64>) -> Self {
        Self {
            r,
            psi,
            cov,
            support_count: 0,
            point_span: (0, 0),
            first_point: Point2::origin(),
            last_point: Point2::origin(),
            rms: 0.0,
        }
    }
}

/// Weighted orthogonal fit of `(r, psi)` to scanner-frame points.
///
/// Starts from uniform weights and re-weights twice with the per-point
/// perpendicular sigma at the current normal angle. Returns `None` for fewer
/// than two distinct points.
pub fn fit_line(points: &[Point2<f64>], params: &ExtractionParams) -> Option<LineFit> {
    if points.len() < 2 {
        return None;
    }
    let mut psi = None;
    let mut fit = None;
    for _ in 0..3 {
        let weights: Vec<f64> = points.iter().map(|p| params.weight(p, psi)).collect();
        let f = weighted_fit(points, &weights)?;
        psi = Some(f.psi);
        fit = Some(f);
    }
    fit
}

fn weighted_fit(points: &[Point2<f64>], weights: &[f64]) -> Option<LineFit> {
    let sw: f64 = weights.iter().sum();
    let (mut mx, mut my) = (0.0, 0.0);
    for (p, w) in points.iter().zip(weights) {
        mx += w * p.x;
        my += w * p.y;
    }
    mx /= sw;
    my /= sw;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (p, w) in points.iter().zip(weights) {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += w * dx * dx;
        syy += w * dy * dy;
        sxy += w * dx * dy;
    }
    if sxx + syy <= 0.0 {
        return None;
    }
    // Normal = eigenvector of the scatter matrix with the smaller eigenvalue.
    let mut psi = 0.5 * (-2.0 * sxy).atan2(syy - sxx);
    let mut r = mx * psi.cos() + my * psi.sin();
    if r < 0.0 {
        r = -r;
        psi += std::f64::consts::PI;
    }
    let psi = wrap_angle(psi);
    let (s, c) = psi.sin_cos();

    let (mut swt, mut swtt, mut swee) = (0.0, 0.0, 0.0);
    for (p, w) in points.iter().zip(weights) {
        let t = -p.x * s + p.y * c;
        let e = p.x * c + p.y * s - r;
        swt += w * t;
        swtt += w * t * t;
        swee += w * e * e;
    }
    let info = Matrix2::new(sw, -swt, -swt, swtt);
    let cov = info.try_inverse()?;
    let cov = 0.5 * (cov + cov.transpose());
    Some(LineFit {
        r,
        psi,
        cov,
        rms: (swee / sw).sqrt(),
    })
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    index: usize,
    point: Point2<f64>,
}

#[derive(Debug, Clone)]
struct Segment {
    // Inclusive bounds into the sample vector.
    lo: usize,
    hi: usize,
    fit: LineFit,
}

impl Segment {
    fn len(&self) -> usize {
        self.hi + 1 - self.lo
    }
}

/// Extracts line features from a scan by split-and-merge.
///
/// 1. Valid points are grouped into runs, breaking at large gaps.
/// 2. Each run is split recursively at the point farthest from the chord
///    between its end points.
/// 3. Adjacent segments are merged while their parameters agree under a
///    chi-square test and the merged fit still explains every point.
/// 4. End points that sit off the fitted line are trimmed, and segments that
///    are too short or fit poorly are dropped.
pub fn extract_lines(scan: &Scan, params: &ExtractionParams) -> Vec<LocalLine> {
    let samples: Vec<Sample> = scan.points().map(|(index, point)| Sample { index, point }).collect();
    if samples.len() < params.min_points.max(2) {
        return Vec::new();
    }

    let mut spans = Vec::new();
    let mut start = 0;
    for i in 1..samples.len() {
        if (samples[i].point - samples[i - 1].point).norm() > params.max_point_gap {
            spans.push((start, i - 1));
            start = i;
        }
    }
    spans.push((start, samples.len() - 1));

    let mut pieces = Vec::new();
    for (lo, hi) in spans {
        split(&samples, lo, hi, params, &mut pieces);
    }
    pieces.sort_unstable();

    let mut segments: Vec<Segment> = pieces
        .into_iter()
        .filter_map(|(lo, hi)| fit_range(&samples, lo, hi, params).map(|fit| Segment { lo, hi, fit }))
        .collect();

    merge(&samples, &mut segments, params);
    resolve_shared_points(&samples, &mut segments, params);

    segments
        .into_iter()
        .filter_map(|seg| trim(&samples, seg, params))
        .filter(|seg| seg.len() >= params.min_points && seg.fit.rms <= params.max_residual)
        .map(|seg| {
            let first = samples[seg.lo];
            let last = samples[seg.hi];
            LocalLine {
                r: seg.fit.r,
                psi: seg.fit.psi,
                cov: seg.fit.cov,
                support_count: seg.len(),
                point_span: (first.index, last.index),
                first_point: seg.fit.project(&first.point),
                last_point: seg.fit.project(&last.point),
                rms: seg.fit.rms,
            }
        })
        .collect()
}

fn fit_range(samples: &[Sample], lo: usize, hi: usize, params: &ExtractionParams) -> Option<LineFit> {
    let pts: Vec<Point2<f64>> = samples[lo..=hi].iter().map(|s| s.point).collect();
    fit_line(&pts, params)
}

/// Threshold a point's deviation must exceed to count as off the line.
fn deviation_limit(p: &Point2<f64>, psi: f64, params: &ExtractionParams) -> f64 {
    params
        .split_threshold
        .max(params.split_sigmas * params.point_sigma(p, psi))
}

fn split(samples: &[Sample], lo: usize, hi: usize, params: &ExtractionParams, out: &mut Vec<(usize, usize)>) {
    let mut stack = vec![(lo, hi)];
    while let Some((lo, hi)) = stack.pop() {
        if hi < lo + 2 {
            out.push((lo, hi));
            continue;
        }
        let a = samples[lo].point;
        let b = samples[hi].point;
        let d = b - a;
        let len = d.norm();
        if len == 0.0 {
            out.push((lo, hi));
            continue;
        }
        let normal = nalgebra::Vector2::new(-d.y, d.x) / len;
        let psi = normal.y.atan2(normal.x);
        let mut worst = None;
        let mut worst_ratio = 1.0;
        for (k, s) in samples.iter().enumerate().take(hi).skip(lo + 1) {
            let p = s.point;
            let dev = (p - a).dot(&normal).abs();
            let ratio = dev / deviation_limit(&p, psi, params);
            if ratio > worst_ratio {
                worst_ratio = ratio;
                worst = Some(k);
            }
        }
        match worst {
            Some(k) => {
                stack.push((k, hi));
                stack.push((lo, k));
            }
            None => out.push((lo, hi)),
        }
    }
}

fn explains_all(samples: &[Sample], lo: usize, hi: usize, fit: &LineFit, params: &ExtractionParams) -> bool {
    samples[lo..=hi]
        .iter()
        .all(|s| fit.residual(&s.point).abs() <= deviation_limit(&s.point, fit.psi, params))
}

fn merge_chi2(a: &LineFit, b: &LineFit) -> Option<f64> {
    let dr = a.r - b.r;
    let dpsi = angle_diff(a.psi, b.psi);
    let inv = (a.cov + b.cov).try_inverse()?;
    let v = nalgebra::Vector2::new(dr, dpsi);
    Some((v.transpose() * inv * v)[0])
}

fn merge(samples: &[Sample], segments: &mut Vec<Segment>, params: &ExtractionParams) {
    loop {
        let mut best: Option<(usize, f64, LineFit)> = None;
        for i in 0..segments.len().saturating_sub(1) {
            let (a, b) = (&segments[i], &segments[i + 1]);
            let Some(chi2) = merge_chi2(&a.fit, &b.fit) else {
                continue;
            };
            if chi2 > params.merge_chi2 || best.as_ref().is_some_and(|(_, c, _)| *c <= chi2) {
                continue;
            }
            let lo = a.lo;
            let hi = a.hi.max(b.hi);
            let Some(fit) = fit_range(samples, lo, hi, params) else {
                continue;
            };
            if explains_all(samples, lo, hi, &fit, params) {
                best = Some((i, chi2, fit));
            }
        }
        let Some((i, _, fit)) = best else {
            return;
        };
        let next = segments.remove(i + 1);
        let seg = &mut segments[i];
        seg.hi = seg.hi.max(next.hi);
        seg.fit = fit;
    }
}

fn normalized_residual(s: &Sample, fit: &LineFit, params: &ExtractionParams) -> f64 {
    fit.residual(&s.point).abs() / params.point_sigma(&s.point, fit.psi).max(params.sigma_floor)
}

/// A split point ends one segment and starts the next; keep it only where it
/// fits better.
fn resolve_shared_points(samples: &[Sample], segments: &mut [Segment], params: &ExtractionParams) {
    for i in 0..segments.len().saturating_sub(1) {
        let (left, right) = segments.split_at_mut(i + 1);
        let (a, b) = (&mut left[i], &mut right[0]);
        if a.hi != b.lo {
            continue;
        }
        let s = &samples[a.hi];
        if normalized_residual(s, &a.fit, params) <= normalized_residual(s, &b.fit, params) {
            if b.len() > 2 {
                b.lo += 1;
                if let Some(f) = fit_range(samples, b.lo, b.hi, params) {
                    b.fit = f;
                }
            }
        } else if a.len() > 2 {
            a.hi -= 1;
            if let Some(f) = fit_range(samples, a.lo, a.hi, params) {
                a.fit = f;
            }
        }
    }
}

/// Absolute floor for trimming so noiseless fits are not trimmed on rounding.
const TRIM_FLOOR: f64 = 1e-6;

fn trim(samples: &[Sample], mut seg: Segment, params: &ExtractionParams) -> Option<Segment> {
    while seg.len() > 2 {
        let excess = |s: &Sample| {
            let limit = (params.trim_sigmas * params.point_sigma(&s.point, seg.fit.psi)).max(TRIM_FLOOR);
            seg.fit.residual(&s.point).abs() / limit
        };
        let head = excess(&samples[seg.lo]);
        let tail = excess(&samples[seg.hi]);
        if head.max(tail) <= 1.0 {
            break;
        }
        if head >= tail {
            seg.lo += 1;
        } else {
            seg.hi -= 1;
        }
        seg.fit = fit_range(samples, seg.lo, seg.hi, params)?;
    }
    Some(seg)
}
