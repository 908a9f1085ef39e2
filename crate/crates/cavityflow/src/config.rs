//! TOML run configuration.
//!
//! ```toml
//! [geometry]
//! square = 32              # or semi_ellipse = 64, or msh = "cavity.msh"
//!
//! [solver]
//! reynolds = 1000.0
//! method = "method2"       # method1 | method2 | method3 | newton
//! form = "conservative"    # conservative | characteristic | skew_symmetric
//! sigma = 1.0
//! tol = 1e-8
//! max_iter = 100
//!
//! [continuation]           # `continue` only
//! re_start = 500.0
//! delta_start = 2000.0
//! re_target = 20000.0
//! schedule = [100.0, 200.0] # optional: sequential mode
//!
//! [sweep]                  # `sweep` only
//! sigmas = [0.4, 0.5, 0.6]
//! jobs = 1
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use cavityflow_core::continuation::{ContinuationConfig, StepMode};
use cavityflow_core::nonlinear::{DEFAULT_DIVERGENCE_THRESHOLD, DEFAULT_MAX_ITER, DEFAULT_TOL};
use cavityflow_core::postprocess::StreamSign;
use cavityflow_core::{ConvectionForm, Linearization, SolverConfig};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub square: Option<usize>,
    pub semi_ellipse: Option<usize>,
    pub msh: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Method1,
    Method2,
    Method3,
    Newton,
}

impl From<MethodName> for Linearization {
    fn from(m: MethodName) -> Self {
        match m {
            MethodName::Method1 => Linearization::Method1,
            MethodName::Method2 => Linearization::Method2,
            MethodName::Method3 => Linearization::Method3,
            MethodName::Newton => Linearization::Newton,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormName {
    Conservative,
    Characteristic,
    SkewSymmetric,
}

impl From<FormName> for ConvectionForm {
    fn from(f: FormName) -> Self {
        match f {
            FormName::Conservative => ConvectionForm::Conservative,
            FormName::Characteristic => ConvectionForm::Characteristic,
            FormName::SkewSymmetric => ConvectionForm::SkewSymmetric,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub reynolds: f64,
    pub method: MethodName,
    #[serde(default = "default_form")]
    pub form: FormName,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_divergence")]
    pub divergence_threshold: f64,
    #[serde(default = "yes")]
    pub exit_on_tolerance: bool,
    #[serde(default = "one")]
    pub lid_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepModeName {
    FixedIterations,
    ToleranceExit,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationSection {
    pub re_start: Option<f64>,
    pub delta_start: Option<f64>,
    pub re_target: Option<f64>,
    pub schedule: Option<Vec<f64>>,
    #[serde(default = "default_step_mode")]
    pub step_mode: StepModeName,
    #[serde(default = "default_step_cap")]
    pub step_iteration_cap: usize,
    #[serde(default = "default_budget")]
    pub total_iteration_budget: usize,
    #[serde(default = "one")]
    pub delta_min: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub sigmas: Vec<f64>,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamSignName {
    Standard,
    Flipped,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "yes")]
    pub vtk: bool,
    #[serde(default = "yes")]
    pub csv_history: bool,
    #[serde(default = "yes")]
    pub csv_profiles: bool,
    #[serde(default = "yes")]
    pub stream_function: bool,
    #[serde(default = "yes")]
    pub vorticity: bool,
    #[serde(default = "default_sign")]
    pub stream_sign: StreamSignName,
    #[serde(default = "default_profile_points")]
    pub profile_points: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_dir(),
            vtk: true,
            csv_history: true,
            csv_profiles: true,
            stream_function: true,
            vorticity: true,
            stream_sign: StreamSignName::Standard,
            profile_points: default_profile_points(),
        }
    }
}

fn default_form() -> FormName {
    FormName::Conservative
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}
fn default_divergence() -> f64 {
    DEFAULT_DIVERGENCE_THRESHOLD
}
fn default_step_mode() -> StepModeName {
    StepModeName::FixedIterations
}
fn default_step_cap() -> usize {
    10
}
fn default_budget() -> usize {
    500
}
fn default_jobs() -> usize {
    1
}
fn default_dir() -> PathBuf {
    PathBuf::from("output")
}
fn default_sign() -> StreamSignName {
    StreamSignName::Standard
}
fn default_profile_points() -> usize {
    101
}

/// Raw file contents after key checking, before semantic validation.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    geometry: GeometrySection,
    solver: SolverSection,
    continuation: Option<ContinuationSection>,
    sweep: Option<SweepSection>,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Square(usize),
    SemiEllipse(usize),
    Msh(PathBuf),
}

#[derive(Debug, Clone)]
pub enum ContinuationPlan {
    Bisection(ContinuationConfig),
    Schedule(ContinuationConfig, Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub solver: SolverConfig,
    pub lid_speed: f64,
    pub continuation: Option<ContinuationPlan>,
    pub sweep: Option<SweepSection>,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn stream_sign(&self) -> StreamSign {
        match self.output.stream_sign {
            StreamSignName::Standard => StreamSign::Standard,
            StreamSignName::Flipped => StreamSign::Flipped,
        }
    }

    /// Parses and validates a config document. Relative `msh` paths are
    /// resolved against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let g = raw.geometry;
        let mut sources = Vec::new();
        if let Some(m) = g.square {
            if m < 1 {
                return Err(invalid("geometry.square", "resolution must be at least 1"));
            }
            sources.push(Geometry::Square(m));
        }
        if let Some(m) = g.semi_ellipse {
            if m < 2 {
                return Err(invalid("geometry.semi_ellipse", "resolution must be at least 2"));
            }
            sources.push(Geometry::SemiEllipse(m));
        }
        if let Some(p) = g.msh {
            let p = match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            };
            sources.push(Geometry::Msh(p));
        }
        if sources.len() != 1 {
            return Err(invalid(
                "geometry",
                "exactly one of `square`, `semi_ellipse`, `msh` must be given",
            ));
        }
        let geometry = sources.pop().expect("one source");

        let s = raw.solver;
        if !(s.reynolds.is_finite() && s.reynolds > 0.0) {
            return Err(invalid("solver.reynolds", "must be positive and finite"));
        }
        if !(s.sigma > 0.0 && s.sigma <= 1.0) {
            return Err(invalid("solver.sigma", format!("{} is outside (0, 1]", s.sigma)));
        }
        if !(s.tol.is_finite() && s.tol > 0.0) {
            return Err(invalid("solver.tol", "must be positive"));
        }
        if s.max_iter == 0 {
            return Err(invalid("solver.max_iter", "must be at least 1"));
        }
        if !(s.divergence_threshold > 0.0) {
            return Err(invalid("solver.divergence_threshold", "must be positive"));
        }
        if !s.lid_speed.is_finite() {
            return Err(invalid("solver.lid_speed", "must be finite"));
        }
        let solver = SolverConfig {
            reynolds: s.reynolds,
            form: s.form.into(),
            method: s.method.into(),
            sigma: s.sigma,
            tol: s.tol,
            max_iter: s.max_iter,
            divergence_threshold: s.divergence_threshold,
            exit_on_tolerance: s.exit_on_tolerance,
            stokes: false,
        };

        let continuation = match raw.continuation {
            None => None,
            Some(c) => Some(continuation_plan(c, solver)?),
        };

        if let Some(sw) = &raw.sweep {
            if sw.sigmas.is_empty() {
                return Err(invalid("sweep.sigmas", "list is empty"));
            }
            if let Some(bad) = sw.sigmas.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
                return Err(invalid("sweep.sigmas", format!("sigma {bad} is outside (0, 1]")));
            }
            if sw.jobs == 0 {
                return Err(invalid("sweep.jobs", "must be at least 1"));
            }
        }
        if raw.output.profile_points < 2 {
            return Err(invalid("output.profile_points", "must be at least 2"));
        }
        Ok(RunConfig {
            geometry,
            solver,
            lid_speed: s.lid_speed,
            continuation,
            sweep: raw.sweep,
            output: raw.output,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::parse(&text, path.parent())
    }
}

fn continuation_plan(c: ContinuationSection, solver: SolverConfig) -> Result<ContinuationPlan, ConfigError> {
    let step_mode = match c.step_mode {
        StepModeName::FixedIterations => StepMode::FixedIterations,
        StepModeName::ToleranceExit => StepMode::ToleranceExit,
    };
    if c.step_iteration_cap == 0 {
        return Err(invalid("continuation.step_iteration_cap", "must be at least 1"));
    }
    if c.total_iteration_budget == 0 {
        return Err(invalid("continuation.total_iteration_budget", "must be at least 1"));
    }
    if !(c.delta_min > 0.0) {
        return Err(invalid("continuation.delta_min", "must be positive"));
    }
    let build = |re_start: f64, delta_start: f64, re_target: f64| ContinuationConfig {
        re_start,
        delta_start,
        re_target,
        per_step: solver,
        step_mode,
        step_iteration_cap: c.step_iteration_cap,
        total_iteration_budget: c.total_iteration_budget,
        delta_min: c.delta_min,
    };
    if let Some(schedule) = c.schedule {
        if schedule.is_empty() {
            return Err(invalid("continuation.schedule", "list is empty"));
        }
        if let Some(bad) = schedule.iter().find(|&&r| !(r.is_finite() && r > 0.0)) {
            return Err(invalid("continuation.schedule", format!("Reynolds number {bad} is not positive")));
        }
        let first = schedule[0];
        let last = *schedule.last().expect("nonempty");
        let cfg = build(first, 1.0, last.max(first));
        return Ok(ContinuationPlan::Schedule(cfg, schedule));
    }
    let re_start = c
        .re_start
        .ok_or_else(|| invalid("continuation.re_start", "required in bisection mode"))?;
    let delta_start = c
        .delta_start
        .ok_or_else(|| invalid("continuation.delta_start", "required in bisection mode"))?;
    let re_target = c
        .re_target
        .ok_or_else(|| invalid("continuation.re_target", "required in bisection mode"))?;
    if !(re_start.is_finite() && re_start > 0.0) {
        return Err(invalid("continuation.re_start", "must be positive"));
    }
    if !(delta_start.is_finite() && delta_start > 0.0) {
        return Err(invalid("continuation.delta_start", "must be positive"));
    }
    if !(re_target.is_finite() && re_target >= re_start) {
        return Err(invalid("continuation.re_target", "must be at least re_start"));
    }
    Ok(ContinuationPlan::Bisection(build(re_start, delta_start, re_target)))
}
