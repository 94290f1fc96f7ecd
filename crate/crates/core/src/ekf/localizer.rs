use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{assemble_bundle, predict, predicted_lines, update, NoiseConfig, StateEstimate};
use crate::geometry::{extract_lines, match_lines, ExtractionParams, LineNF, Scan};
use crate::kinematics::{RobotGeometry, WheelRates};
use crate::Error;

/// Which sensors feed the correction step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorMode {
    /// Dead reckoning only.
    #[serde(rename = "odom")]
    Odometry,
    #[serde(rename = "ekf-compass")]
    EkfCompass,
    #[serde(rename = "ekf-lrf")]
    EkfLrf,
    #[serde(rename = "ekf-full")]
    EkfFull,
}

impl EstimatorMode {
    pub const ALL: [EstimatorMode; 4] = [
        EstimatorMode::Odometry,
        EstimatorMode::EkfCompass,
        EstimatorMode::EkfLrf,
        EstimatorMode::EkfFull,
    ];

    pub fn uses_compass(self) -> bool {
        matches!(self, Self::EkfCompass | Self::EkfFull)
    }

    pub fn uses_lrf(self) -> bool {
        matches!(self, Self::EkfLrf | Self::EkfFull)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Odometry => "odom",
            Self::EkfCompass => "ekf-compass",
            Self::EkfLrf => "ekf-lrf",
            Self::EkfFull => "ekf-full",
        }
    }
}

impl fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown estimator mode '{s}' (odom, ekf-compass, ekf-lrf, ekf-full)"
            ))
        })
    }
}

/// Filter tuning that is not a sensor property.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub mode: EstimatorMode,
    /// Squared Mahalanobis gate for line association (9.21 = chi-square 99%, 2 dof).
    pub gate: f64,
    /// Line extraction settings; derived from the scanner noise when absent.
    pub extraction: Option<ExtractionParams>,
    /// Lower bound on the compass variance used in R, so a noiseless compass
    /// still yields an invertible innovation covariance.
    pub min_compass_var: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            mode: EstimatorMode::EkfFull,
            gate: 9.21,
            extraction: None,
            min_compass_var: 1e-12,
        }
    }
}

impl FilterConfig {
    pub fn with_mode(mode: EstimatorMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn extraction_params(&self, noise: &NoiseConfig) -> ExtractionParams {
        self.extraction
            .unwrap_or_else(|| ExtractionParams::for_noise(noise.lrf_range_sigma, noise.lrf_bearing_sigma))
    }
}

/// What the correction step actually used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepMode {
    /// No correction: odometry mode, or nothing usable was observed.
    Predict,
    CompassOnly,
    LrfOnly,
    LrfCompass,
    /// A correction was attempted and refused; the prior was kept.
    Skipped,
}

/// Per-step diagnostics, serialized as one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub k: usize,
    pub mode: StepMode,
    pub n_matched: usize,
    pub mean: [f64; 3],
    /// Row-major covariance.
    pub cov: [f64; 9],
    /// Euclidean norm of the wrapped innovation (0 without a correction).
    pub innov_norm: f64,
    #[serde(skip)]
    pub n_extracted: usize,
    /// Why the step was downgraded, if it was.
    #[serde(skip)]
    pub issue: Option<String>,
}

impl StepReport {
    #[rustfmt::skip]
    fn new(k: usize, state: &StateEstimate, mode: StepMode) -> Self {
        let c = &state.cov;
        Self {
            k,
            mode,
            n_matched: 0,
            mean: state.mean.to_array(),
            cov: [
                c[(0, 0)], c[(0, 1)], c[(0, 2)],
                c[(1, 0)], c[(1, 1)], c[(1, 2)],
                c[(2, 0)], c[(2, 1)], c[(2, 2)],
            ],
            innov_norm: 0.0,
            n_extracted: 0,
            issue: None,
        }
    }

    /// True when the step fell back from the correction its mode asked for.
    pub fn degraded(&self) -> bool {
        matches!(self.mode, StepMode::Skipped) || self.issue.is_some()
    }
}

/// Sensor readings for one step.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub rates: WheelRates,
    pub scan: Option<&'a Scan>,
    pub compass_phi: Option<f64>,
}

/// Shared, read-only context of a filter run.
#[derive(Debug, Clone, Copy)]
struct Context<'a> {
    map: &'a [LineNF],
    geom: &'a RobotGeometry,
    dt: f64,
    noise: &'a NoiseConfig,
    config: &'a FilterConfig,
}

/// One full filter cycle: predict, extract lines, predict map lines, match,
/// assemble, correct.
///
/// Errors never abort the step. They downgrade it to the prior (or to a
/// compass-only correction when only the line part failed) and are recorded
/// in the report.
#[allow(clippy::too_many_arguments)]
pub fn step(
    state: &StateEstimate,
    k: usize,
    input: StepInput<'_>,
    map: &[LineNF],
    geom: &RobotGeometry,
    dt: f64,
    noise: &NoiseConfig,
    config: &FilterConfig,
) -> (StateEstimate, StepReport) {
    let ctx = Context {
        map,
        geom,
        dt,
        noise,
        config,
    };
    run_step(state, k, input, &ctx)
}

fn run_step(state: &StateEstimate, k: usize, input: StepInput<'_>, ctx: &Context<'_>) -> (StateEstimate, StepReport) {
    let prior = predict(state, input.rates, ctx.geom, ctx.dt, ctx.noise.delta);
    let mode = ctx.config.mode;
    if mode == EstimatorMode::Odometry {
        return (prior, StepReport::new(k, &prior, StepMode::Predict));
    }

    let locals = match (mode.uses_lrf(), input.scan) {
        (true, Some(scan)) => extract_lines(scan, &ctx.config.extraction_params(ctx.noise)),
        _ => Vec::new(),
    };
    let assoc = if locals.is_empty() {
        Default::default()
    } else {
        match_lines(&locals, &predicted_lines(&prior, ctx.map), ctx.config.gate)
    };
    let compass = match (mode.uses_compass(), input.compass_phi) {
        (true, Some(phi)) => Some((phi, ctx.noise.compass_var.max(ctx.config.min_compass_var))),
        _ => None,
    };

    let mut issue = None;
    let bundle = match assemble_bundle(&prior, &locals, ctx.map, &assoc, compass) {
        Ok(b) => Some(b),
        Err(Error::InvalidMeasurement(_)) if assoc.is_empty() && compass.is_none() => None,
        Err(e) => {
            issue = Some(e.to_string());
            // Retry without the line rows.
            compass.and_then(|c| assemble_bundle(&prior, &locals, ctx.map, &Default::default(), Some(c)).ok())
        }
    };

    let Some(bundle) = bundle else {
        let mut report = StepReport::new(k, &prior, StepMode::Predict);
        report.n_extracted = locals.len();
        report.issue = issue;
        return (prior, report);
    };

    let step_mode = match (bundle.n_lines() > 0, bundle.has_compass()) {
        (true, true) => StepMode::LrfCompass,
        (true, false) => StepMode::LrfOnly,
        _ => StepMode::CompassOnly,
    };
    match update(&prior, &bundle) {
        Ok(post) => {
            let mut report = StepReport::new(k, &post, step_mode);
            report.n_matched = bundle.n_lines();
            report.n_extracted = locals.len();
            report.innov_norm = bundle.innovation().norm();
            report.issue = issue;
            (post, report)
        }
        Err(e) => {
            let mut report = StepReport::new(k, &prior, StepMode::Skipped);
            report.n_extracted = locals.len();
            report.issue = Some(e.to_string());
            (prior, report)
        }
    }
}

/// A filter instance that owns its estimate and step counter.
#[derive(Debug, Clone)]
pub struct Localizer {
    state: StateEstimate,
    k: usize,
    map: Vec<LineNF>,
    geom: RobotGeometry,
    dt: f64,
    noise: NoiseConfig,
    config: FilterConfig,
}

impl Localizer {
    pub fn new(
        initial: StateEstimate,
        map: Vec<LineNF>,
        geom: RobotGeometry,
        dt: f64,
        noise: NoiseConfig,
        config: FilterConfig,
    ) -> Self {
        Self {
            state: initial,
            k: 0,
            map,
            geom,
            dt,
            noise,
            config,
        }
    }

    pub fn state(&self) -> &StateEstimate {
        &self.state
    }

    pub fn mode(&self) -> EstimatorMode {
        self.config.mode
    }

    pub fn map(&self) -> &[LineNF] {
        &self.map
    }

    pub fn step(&mut self, input: StepInput<'_>) -> StepReport {
        let ctx = Context {
            map: &self.map,
            geom: &self.geom,
            dt: self.dt,
            noise: &self.noise,
            config: &self.config,
        };
        let (next, report) = run_step(&self.state, self.k, input, &ctx);
        self.state = next;
        self.k += 1;
        report
    }
}
