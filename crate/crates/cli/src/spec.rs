//! Experiment specification: the TOML schema, defaults and pre-run checks.

use std::sync::Arc;

use adiabatics::dynamics::{check_step, STEP_LIMIT};
use adiabatics::models::{
    self_consistent_omega_x, CrankedOscillatorModel, FastModel, MovingWellModel, RandomHermitianModel,
    SpinFieldModel, SpinProfile, Stencil, TwoLevelModel, WellProfile,
};
use adiabatics::spectral::SpectralOptions;
use adiabatics::ParameterPoint;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MODEL_KINDS: &[(&str, &str)] = &[
    ("spin", "twice_s, profile = { kind = sphere | planar-rotation | linear, ... }"),
    ("two-level", "offset = [x, y, z], jacobian = [[..3], ...] (one row per slow coordinate)"),
    ("avoided-crossing", "delta (minimum gap is 2 delta)"),
    ("moving-well", "n_points, spacing, particle_mass, well = { kind = harmonic | gaussian, ... }, stencil"),
    ("cranked-oscillator", "omega_z, n_occupied, n_shells, particle_mass, omega_x (omit for self-consistent)"),
    ("random", "dim, n_params, seed"),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub model: ModelSpec,
    pub task: TaskSpec,
    #[serde(default)]
    pub numeric: NumericSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Spin {
        twice_s: u32,
        profile: SpinProfile,
    },
    TwoLevel {
        offset: [f64; 3],
        jacobian: Vec<[f64; 3]>,
    },
    AvoidedCrossing {
        delta: f64,
    },
    MovingWell {
        n_points: usize,
        spacing: f64,
        #[serde(default = "one")]
        particle_mass: f64,
        well: WellProfile,
        #[serde(default = "three_point")]
        stencil: Stencil,
    },
    CrankedOscillator {
        omega_z: f64,
        #[serde(default)]
        omega_x: Option<f64>,
        n_occupied: usize,
        #[serde(default = "default_shells")]
        n_shells: usize,
        #[serde(default = "one")]
        particle_mass: f64,
    },
    Random {
        dim: usize,
        n_params: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryMethod {
    Effective,
    Coupled,
    Both,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl AxisSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let step = (self.end - self.start) / (self.points - 1) as f64;
        (0..self.points).map(|k| self.start + step * k as f64).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskSpec {
    GeometryGrid {
        #[serde(default)]
        level: usize,
        axes: Vec<AxisSpec>,
        #[serde(default)]
        fail_fast: bool,
    },
    VelocitySweep {
        #[serde(default)]
        level: usize,
        origin: Vec<f64>,
        direction: Vec<f64>,
        speeds: Vec<f64>,
        #[serde(default = "default_duration")]
        duration: f64,
        #[serde(default = "default_transient")]
        transient_fraction: f64,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
        #[serde(default = "yes")]
        dressed_start: bool,
    },
    LeakageScan {
        #[serde(default)]
        level: usize,
        start: Vec<f64>,
        end: Vec<f64>,
        rates: Vec<f64>,
        #[serde(default = "default_floor")]
        floor: f64,
        #[serde(default = "yes")]
        dressed_start: bool,
    },
    Trajectory {
        #[serde(default)]
        level: usize,
        start: Vec<f64>,
        velocity: Vec<f64>,
        duration: f64,
        #[serde(default = "both")]
        method: TrajectoryMethod,
        #[serde(default)]
        external_force: Option<Vec<f64>>,
        #[serde(default = "yes")]
        scalar_potential: bool,
    },
    CrossingScan {
        #[serde(default)]
        level: usize,
        centre: Vec<f64>,
        direction: Vec<f64>,
        r_min: f64,
        r_max: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    Trk {
        #[serde(default)]
        level: usize,
        #[serde(default)]
        position: f64,
        #[serde(default = "yes")]
        refine: bool,
    },
    Inglis {
        #[serde(default = "default_theta")]
        theta: f64,
    },
    OrderAudit {
        #[serde(default)]
        level: usize,
        centre: Vec<f64>,
        #[serde(default = "default_axes")]
        axes: [usize; 2],
        speeds: Vec<f64>,
        periods: Vec<f64>,
        #[serde(default = "default_time_nodes")]
        time_nodes: usize,
        #[serde(default = "default_radial_nodes")]
        radial_nodes: usize,
        #[serde(default = "default_angular_nodes")]
        angular_nodes: usize,
    },
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::GeometryGrid { .. } => "geometry-grid",
            TaskSpec::VelocitySweep { .. } => "velocity-sweep",
            TaskSpec::LeakageScan { .. } => "leakage-scan",
            TaskSpec::Trajectory { .. } => "trajectory",
            TaskSpec::CrossingScan { .. } => "crossing-scan",
            TaskSpec::Trk { .. } => "trk",
            TaskSpec::Inglis { .. } => "inglis",
            TaskSpec::OrderAudit { .. } => "order-audit",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericSpec {
    pub hbar: f64,
    /// Degeneracy threshold relative to the spectral range.
    pub gap_tol_rel: f64,
    pub dt: f64,
    /// Upper bound on `dt * spectral range / hbar`.
    pub step_limit: f64,
    /// Isotropic primitive inertia of the slow coordinates.
    pub mass: f64,
    /// Central-difference step for field gradients.
    pub fd_step: f64,
    pub seed: u64,
    /// 0 means all available cores.
    pub threads: usize,
}

impl Default for NumericSpec {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            gap_tol_rel: 1e-8,
            dt: 0.01,
            step_limit: STEP_LIMIT,
            mass: 1.0,
            fd_step: 1e-4,
            seed: 0,
            threads: 0,
        }
    }
}

impl NumericSpec {
    pub fn spectral(&self) -> SpectralOptions {
        SpectralOptions { gap_tol_rel: self.gap_tol_rel }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Relative paths resolve against the output root.
    pub dir: Option<String>,
    pub format: OutputFormat,
    /// Record every `stride`-th time step.
    pub stride: usize,
    /// Replace existing result files; otherwise refuse to run.
    pub overwrite: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: None, format: OutputFormat::Csv, stride: 1, overwrite: true }
    }
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn both() -> TrajectoryMethod {
    TrajectoryMethod::Both
}
fn three_point() -> Stencil {
    Stencil::ThreePoint
}
fn default_shells() -> usize {
    12
}
fn default_duration() -> f64 {
    200.0
}
fn default_transient() -> f64 {
    0.2
}
fn default_tolerance() -> f64 {
    0.01
}
fn default_floor() -> f64 {
    1e-14
}
fn default_samples() -> usize {
    12
}
fn default_theta() -> f64 {
    0.3
}
fn default_axes() -> [usize; 2] {
    [0, 1]
}
fn default_time_nodes() -> usize {
    128
}
fn default_radial_nodes() -> usize {
    12
}
fn default_angular_nodes() -> usize {
    48
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

/// A constructed model plus the concrete handles some tasks need.
pub struct BuiltModel {
    pub model: Arc<dyn FastModel>,
    pub well: Option<Arc<MovingWellModel>>,
    pub cranked: Option<Arc<CrankedOscillatorModel>>,
}

fn schema(msg: impl Into<String>) -> CliError {
    CliError::Schema(msg.into())
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| schema(unknown_kind_hint(e.to_string())))?;
        Ok(spec)
    }

    /// Applies overrides and makes every implicit choice explicit, so the
    /// serialized spec is a complete record of what ran.
    pub fn resolve(&mut self, overrides: Overrides) {
        if let Some(seed) = overrides.seed {
            self.numeric.seed = seed;
        }
        if let Some(t) = overrides.threads {
            self.numeric.threads = t;
        }
        if self.numeric.threads == 0 {
            self.numeric.threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        }
        if let ModelSpec::Random { seed, .. } = &mut self.model {
            if overrides.seed.is_some() || seed.is_none() {
                *seed = Some(self.numeric.seed);
            }
        }
    }

    pub fn build_model(&self) -> Result<BuiltModel, CliError> {
        let hbar = self.numeric.hbar;
        let bad = |e: adiabatics::Error| schema(format!("model: {e}"));
        let plain = |m: Arc<dyn FastModel>| BuiltModel { model: m, well: None, cranked: None };
        Ok(match &self.model {
            ModelSpec::Spin { twice_s, profile } => {
                plain(Arc::new(SpinFieldModel::new(*twice_s, profile.clone(), hbar).map_err(bad)?))
            }
            ModelSpec::TwoLevel { offset, jacobian } => {
                plain(Arc::new(TwoLevelModel::new(*offset, jacobian.clone(), hbar).map_err(bad)?))
            }
            ModelSpec::AvoidedCrossing { delta } => {
                if !(*delta > 0.0 && delta.is_finite()) {
                    return Err(schema(format!("model: delta must be positive, got {delta}")));
                }
                plain(Arc::new(TwoLevelModel::avoided_crossing(*delta, hbar)))
            }
            ModelSpec::MovingWell { n_points, spacing, particle_mass, well, stencil } => {
                let m = Arc::new(
                    MovingWellModel::new(*n_points, *spacing, *particle_mass, well.clone(), *stencil, hbar).map_err(bad)?,
                );
                BuiltModel { model: m.clone(), well: Some(m), cranked: None }
            }
            ModelSpec::CrankedOscillator { omega_z, omega_x, n_occupied, n_shells, particle_mass } => {
                let wx = match omega_x {
                    Some(w) => *w,
                    None => self_consistent_omega_x(*n_occupied, *omega_z, *n_shells, *n_occupied as f64 + 0.4)
                        .map_err(bad)?,
                };
                let m = Arc::new(
                    CrankedOscillatorModel::new(wx, *omega_z, *particle_mass, hbar, *n_occupied, *n_shells)
                        .map_err(bad)?,
                );
                BuiltModel { model: m.clone(), well: None, cranked: Some(m) }
            }
            ModelSpec::Random { dim, n_params, seed } => plain(Arc::new(
                RandomHermitianModel::new(*dim, *n_params, seed.unwrap_or(self.numeric.seed), hbar).map_err(bad)?,
            )),
        })
    }

    /// Schema and physics preconditions that can be checked without running the task.
    pub fn check(&self, built: &BuiltModel) -> Result<(), CliError> {
        let n = &self.numeric;
        for (name, v) in [("hbar", n.hbar), ("dt", n.dt), ("mass", n.mass), ("fd_step", n.fd_step), ("step_limit", n.step_limit)]
        {
            if !(v > 0.0 && v.is_finite()) {
                return Err(schema(format!("numeric.{name} must be positive and finite, got {v}")));
            }
        }
        if !(n.gap_tol_rel >= 0.0) {
            return Err(schema(format!("numeric.gap_tol_rel must be non-negative, got {}", n.gap_tol_rel)));
        }
        if self.output.stride == 0 {
            return Err(schema("output.stride must be at least 1"));
        }
        let model = built.model.as_ref();
        let d = model.n_params();
        let dim = model.dim();
        let vec_len = |name: &str, v: &[f64]| -> Result<(), CliError> {
            if v.len() != d {
                return Err(schema(format!("task.{name} has {} entries but the model has {d} slow coordinates", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(schema(format!("task.{name} contains a non-finite value")));
            }
            Ok(())
        };
        let level_ok = |level: usize| -> Result<(), CliError> {
            if level >= dim {
                return Err(schema(format!("task.level {level} out of range for a {dim}-level model")));
            }
            Ok(())
        };
        let positive = |name: &str, v: &[f64]| -> Result<(), CliError> {
            if v.is_empty() || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(schema(format!("task.{name} must be a non-empty list of positive values")));
            }
            Ok(())
        };
        match &self.task {
            TaskSpec::GeometryGrid { level, axes, .. } => {
                level_ok(*level)?;
                if axes.len() != d {
                    return Err(schema(format!("task.axes has {} axes but the model has {d} slow coordinates", axes.len())));
                }
                if axes.iter().any(|a| a.points == 0 || !a.start.is_finite() || !a.end.is_finite()) {
                    return Err(schema("task.axes: every axis needs finite bounds and at least one point"));
                }
            }
            TaskSpec::VelocitySweep { level, origin, direction, speeds, duration, transient_fraction, .. } => {
                level_ok(*level)?;
                vec_len("origin", origin)?;
                vec_len("direction", direction)?;
                positive("speeds", speeds)?;
                if speeds.windows(2).any(|w| w[1] > w[0]) {
                    return Err(schema("task.speeds must be sorted in descending order"));
                }
                if !(*duration > 0.0) || !(0.0..1.0).contains(transient_fraction) {
                    return Err(schema("task.duration must be positive and transient_fraction in [0, 1)"));
                }
                self.check_dt(model, origin)?;
            }
            TaskSpec::LeakageScan { level, start, end, rates, .. } => {
                level_ok(*level)?;
                vec_len("start", start)?;
                vec_len("end", end)?;
                positive("rates", rates)?;
                self.check_dt(model, start)?;
            }
            TaskSpec::Trajectory { level, start, velocity, duration, method, external_force, .. } => {
                level_ok(*level)?;
                vec_len("start", start)?;
                vec_len("velocity", velocity)?;
                if !(*duration > 0.0) {
                    return Err(schema("task.duration must be positive"));
                }
                if let Some(f) = external_force {
                    vec_len("external_force", f)?;
                    if *method != TrajectoryMethod::Effective {
                        return Err(schema("task.external_force is only supported with method = \"effective\""));
                    }
                }
                if *method != TrajectoryMethod::Effective {
                    self.check_dt(model, start)?;
                }
            }
            TaskSpec::CrossingScan { level, centre, direction, r_min, r_max, samples } => {
                level_ok(*level)?;
                vec_len("centre", centre)?;
                vec_len("direction", direction)?;
                if direction.iter().all(|x| *x == 0.0) {
                    return Err(schema("task.direction must be non-zero"));
                }
                if !(*r_min > 0.0 && r_max > r_min) || *samples < 2 {
                    return Err(schema("task needs 0 < r_min < r_max and at least 2 samples"));
                }
            }
            TaskSpec::Trk { level, .. } => {
                if built.well.is_none() {
                    return Err(schema("task trk requires model kind moving-well"));
                }
                level_ok(*level)?;
            }
            TaskSpec::Inglis { theta } => {
                if built.cranked.is_none() {
                    return Err(schema("task inglis requires model kind cranked-oscillator"));
                }
                if !theta.is_finite() {
                    return Err(schema("task.theta must be finite"));
                }
            }
            TaskSpec::OrderAudit { level, centre, axes, speeds, periods, .. } => {
                level_ok(*level)?;
                vec_len("centre", centre)?;
                if axes[0] == axes[1] || axes.iter().any(|&a| a >= d) {
                    return Err(schema(format!("task.axes must be two distinct indices below {d}")));
                }
                positive("speeds", speeds)?;
                positive("periods", periods)?;
            }
        }
        Ok(())
    }

    fn check_dt(&self, model: &dyn FastModel, at: &[f64]) -> Result<(), CliError> {
        let point = ParameterPoint::new(at.to_vec()).map_err(|e| schema(e.to_string()))?;
        check_step(model, &point, self.numeric.dt, self.numeric.step_limit).map_err(|e| {
            schema(format!(
                "precondition failed: dt * spectral range / hbar must stay below numeric.step_limit at the start point ({e})"
            ))
        })
    }
}

fn unknown_kind_hint(msg: String) -> String {
    if msg.contains("unknown variant") && msg.contains("spin") && msg.contains("moving-well") {
        let kinds: Vec<&str> = MODEL_KINDS.iter().map(|(k, _)| *k).collect();
        format!("{msg}\nsupported model kinds: {}", kinds.join(", "))
    } else {
        msg
    }
}
