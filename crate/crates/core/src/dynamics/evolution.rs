use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::error::{Error, Result};
use crate::geometry::LevelGeometry;
use crate::linalg::{self, CMatrix, CVector};
use crate::models::FastModel;
use crate::spectral::{eigensystem, ParameterPoint, SpectralData, SpectralOptions};

use super::path::DrivePath;

/// Largest allowed `dt * (spectral range) / hbar`.
pub const STEP_LIMIT: f64 = 0.1;

/// Time series from a quantum, classical or mixed run.  Columns that do not
/// apply to a run are left empty.
#[derive(Debug, Clone, Default, Serialize)]
pub struct TrajectoryRecord {
    pub level: usize,
    pub times: Vec<f64>,
    #[serde(skip)]
    pub states: Vec<CVector>,
    pub norms: Vec<f64>,
    /// Instantaneous spectrum at each sample.
    pub energies: Vec<Vec<f64>>,
    /// `<psi|H|psi> - E_level`
    pub energy_shift: Vec<f64>,
    /// `1 - |<level|psi>|^2`
    pub leakage: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    /// Kinetic momentum for effective runs, `M dX/dt` for coupled runs.
    pub momenta: Vec<Vec<f64>>,
    /// Conserved energy of the classical (or mixed) dynamics.
    pub conserved_energy: Vec<f64>,
    /// Set when the run stopped before its requested duration.
    pub truncated: bool,
    pub steps: usize,
}

impl TrajectoryRecord {
    pub fn max_norm_drift(&self) -> f64 {
        self.norms.iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn final_leakage(&self) -> Option<f64> {
        self.leakage.last().copied()
    }

    pub fn max_leakage(&self) -> Option<f64> {
        self.leakage.iter().copied().reduce(f64::max)
    }

    /// Largest relative deviation of the conserved energy from its initial value.
    pub fn energy_drift(&self) -> f64 {
        let Some(&e0) = self.conserved_energy.first() else { return 0.0 };
        let scale = e0.abs().max(f64::MIN_POSITIVE);
        self.conserved_energy.iter().map(|e| (e - e0).abs() / scale).fold(0.0, f64::max)
    }

    pub(crate) fn push_quantum(&mut self, t: f64, psi: &CVector, spectral: &SpectralData, h: &CMatrix, keep: bool) {
        let n = self.level;
        let norm = psi.norm();
        let overlap = spectral.state(n).dotc(psi).norm_sqr();
        let expect = psi.dotc(&(h * psi)).re / (norm * norm);
        self.times.push(t);
        self.norms.push(norm);
        self.energies.push(spectral.energies.clone());
        self.energy_shift.push(expect - spectral.energies[n]);
        self.leakage.push((1.0 - overlap / (norm * norm)).clamp(0.0, 1.0));
        if keep {
            self.states.push(psi.clone());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionOptions {
    pub dt: f64,
    /// Record every `stride`-th step (the final step is always recorded).
    pub stride: usize,
    /// Largest Hilbert-space dimension handled by exact exponentiation.
    pub max_dim: usize,
    pub step_limit: f64,
    pub keep_states: bool,
}

impl Default for EvolutionOptions {
    fn default() -> Self {
        Self { dt: 0.01, stride: 1, max_dim: 512, step_limit: STEP_LIMIT, keep_states: false }
    }
}

impl EvolutionOptions {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt = {}", self.dt)));
        }
        if self.stride == 0 {
            return Err(Error::InvalidParameter("stride must be positive".into()));
        }
        Ok(())
    }
}

/// Fails unless `dt * (E_max - E_min) / hbar < limit` at `point`.
pub fn check_step(model: &dyn FastModel, point: &ParameterPoint, dt: f64, limit: f64) -> Result<()> {
    let s = eigensystem(&model.hamiltonian(point), point)?;
    let product = dt * s.spectral_range() / model.hbar();
    if product >= limit {
        return Err(Error::StepTooLarge { dt, product, limit });
    }
    Ok(())
}

fn check_state(psi: &CVector, dim: usize) -> Result<()> {
    if psi.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: psi.len() });
    }
    let norm = psi.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized { norm });
    }
    Ok(())
}

/// `exp(-i H dt / hbar)` applied to `psi` through the given eigendecomposition.
pub(crate) fn propagate(spectral: &SpectralData, psi: &CVector, dt: f64, hbar: f64) -> CVector {
    let mut coeff = spectral.states.adjoint() * psi;
    for (k, z) in coeff.iter_mut().enumerate() {
        *z *= Complex64::from_polar(1.0, -spectral.energies[k] * dt / hbar);
    }
    &spectral.states * coeff
}

/// Integrates `i hbar d psi/dt = H(X(t)) psi` along `path`, one exact exponential
/// of the midpoint Hamiltonian per step.
pub fn driven_evolution(
    model: &dyn FastModel,
    path: &DrivePath,
    psi0: &CVector,
    level: usize,
    opts: &EvolutionOptions,
) -> Result<TrajectoryRecord> {
    opts.validate()?;
    path.validate()?;
    let dim = model.dim();
    if dim > opts.max_dim {
        return Err(Error::InvalidParameter(format!(
            "dimension {dim} exceeds the exact-propagation cap {}",
            opts.max_dim
        )));
    }
    if level >= dim {
        return Err(Error::InvalidParameter(format!("level {level} out of range")));
    }
    if path.n_params() != model.n_params() {
        return Err(Error::DimensionMismatch { expected: model.n_params(), found: path.n_params() });
    }
    check_state(psi0, dim)?;
    let duration = path.duration();
    let steps = ((duration / opts.dt) - 1e-9).ceil().max(0.0) as usize;
    let dt = if steps > 0 { duration / steps as f64 } else { 0.0 };
    for k in 0..=8 {
        let p = path.position(duration * k as f64 / 8.0);
        model.check_point(&p)?;
        check_step(model, &p, opts.dt, opts.step_limit)?;
    }

    let hbar = model.hbar();
    let mut rec = TrajectoryRecord { level, ..Default::default() };
    let mut psi = psi0.clone();
    let record = |rec: &mut TrajectoryRecord, t: f64, psi: &CVector| -> Result<()> {
        let p = path.position(t);
        let h = model.hamiltonian(&p);
        let s = eigensystem(&h, &p)?;
        rec.positions.push(p.coords().to_vec());
        rec.push_quantum(t, psi, &s, &h, opts.keep_states);
        Ok(())
    };
    record(&mut rec, 0.0, &psi)?;
    for k in 0..steps {
        let mid = path.position((k as f64 + 0.5) * dt);
        let s = eigensystem(&model.hamiltonian(&mid), &mid)?;
        let product = dt * s.spectral_range() / hbar;
        if product >= opts.step_limit {
            return Err(Error::StepTooLarge { dt, product, limit: opts.step_limit });
        }
        psi = propagate(&s, &psi, dt, hbar);
        if (k + 1) % opts.stride == 0 || k + 1 == steps {
            record(&mut rec, (k + 1) as f64 * dt, &psi)?;
        }
    }
    rec.steps = steps;
    Ok(rec)
}

/// Level `n` dressed to first order in the velocity,
/// `|n> + sum_m i hbar <m|d_t n> / (E_m - E_n) |m>`, normalized.
///
/// Starting a driven run here instead of in the bare eigenstate avoids the
/// O(V) oscillation that a sudden start superposes on the adiabatic state.
pub fn dressed_state(
    model: &dyn FastModel,
    point: &ParameterPoint,
    velocity: &[f64],
    n: usize,
    opts: &SpectralOptions,
) -> Result<CVector> {
    if velocity.len() != model.n_params() {
        return Err(Error::DimensionMismatch { expected: model.n_params(), found: velocity.len() });
    }
    let geo = LevelGeometry::compute(model, point, n, opts)?;
    let s = &geo.spectral;
    let en = s.energies[n];
    let mut psi = s.state(n);
    for m in 0..s.dim() {
        if m == n {
            continue;
        }
        let mut dn = Complex64::new(0.0, 0.0);
        for (i, v) in velocity.iter().enumerate() {
            dn += geo.couplings.get(i, m) * *v;
        }
        let a = linalg::I * geo.hbar * dn / (s.energies[m] - en);
        psi += s.state(m) * a;
    }
    let norm = psi.norm();
    Ok(psi / Complex64::new(norm, 0.0))
}

fn start_state(
    model: &dyn FastModel,
    path: &DrivePath,
    level: usize,
    dressed: bool,
    opts: &SpectralOptions,
) -> Result<CVector> {
    let p0 = path.position(0.0);
    model.check_point(&p0)?;
    if dressed {
        dressed_state(model, &p0, &path.velocity(0.0), level, opts)
    } else {
        Ok(eigensystem(&model.hamiltonian(&p0), &p0)?.state(level))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub evolution: EvolutionOptions,
    pub duration: f64,
    /// Leading fraction of each run excluded from the average.
    pub transient_fraction: f64,
    /// Relative tolerance between the two slowest ratios.
    pub tolerance: f64,
    pub dressed_start: bool,
    pub spectral: SpectralOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            evolution: EvolutionOptions::default(),
            duration: 200.0,
            transient_fraction: 0.2,
            tolerance: 0.01,
            dressed_start: true,
            spectral: SpectralOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub speed: f64,
    /// Time average of `<H> - E_n` over the steady part of the run.
    pub mean_shift: f64,
    /// `2 mean_shift / V^2`; absent at zero speed.
    pub ratio: Option<f64>,
    pub final_leakage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub level: usize,
    pub direction: Vec<f64>,
    pub rows: Vec<SweepRow>,
    /// False when the two slowest ratios differ by more than the tolerance.
    pub converged: bool,
}

impl SweepTable {
    pub fn slowest_ratio(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.ratio)
    }
}

/// Trapezoid average of `values` over samples with `t >= t_from`.
pub fn time_average(times: &[f64], values: &[f64], t_from: f64) -> f64 {
    let idx: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= t_from).collect();
    if idx.len() < 2 {
        return idx.first().map(|&i| values[i]).unwrap_or(0.0);
    }
    let mut area = 0.0;
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        area += 0.5 * (values[a] + values[b]) * (times[b] - times[a]);
    }
    area / (times[*idx.last().unwrap()] - times[idx[0]])
}

/// Drives level `level` along `origin + V t direction` at each speed and
/// reports the steady energy shift; the ratio tends to the directional induced
/// inertia `d.I.d` as `V -> 0`.
pub fn velocity_sweep(
    model: &dyn FastModel,
    origin: &ParameterPoint,
    direction: &[f64],
    speeds: &[f64],
    level: usize,
    opts: &SweepOptions,
) -> Result<SweepTable> {
    if speeds.is_empty() || speeds.windows(2).any(|w| w[1] > w[0]) || speeds.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidParameter("speeds must be non-negative and sorted descending".into()));
    }
    if !(0.0..1.0).contains(&opts.transient_fraction) {
        return Err(Error::InvalidParameter(format!(
            "transient fraction {} outside [0, 1)",
            opts.transient_fraction
        )));
    }
    let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
    if norm == 0.0 || direction.len() != origin.dim() {
        return Err(Error::InvalidParameter("direction must be a non-zero vector of the parameter dimension".into()));
    }
    let dir: Vec<f64> = direction.iter().map(|d| d / norm).collect();
    let rows: Vec<Result<SweepRow>> = speeds
        .par_iter()
        .map(|&speed| {
            let velocity: Vec<f64> = dir.iter().map(|d| d * speed).collect();
            let path = DrivePath::linear(origin.coords().to_vec(), velocity, opts.duration)?;
            let psi0 = start_state(model, &path, level, opts.dressed_start, &opts.spectral)?;
            let rec = driven_evolution(model, &path, &psi0, level, &opts.evolution)?;
            let mean_shift =
                time_average(&rec.times, &rec.energy_shift, opts.transient_fraction * opts.duration);
            Ok(SweepRow {
                speed,
                mean_shift,
                ratio: (speed > 0.0).then(|| 2.0 * mean_shift / (speed * speed)),
                final_leakage: rec.final_leakage().unwrap_or(0.0),
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let converged = match ratios.as_slice() {
        [.., a, b] => (a - b).abs() <= opts.tolerance * b.abs(),
        _ => false,
    };
    if !converged {
        log::warn!("velocity sweep did not converge: slowest ratios {ratios:?}");
    }
    Ok(SweepTable { level, direction: dir, rows, converged })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeakageOptions {
    pub evolution: EvolutionOptions,
    /// Leakage below this is reported as censored.
    pub floor: f64,
    pub dressed_start: bool,
    pub spectral: SpectralOptions,
}

impl Default for LeakageOptions {
    fn default() -> Self {
        Self {
            evolution: EvolutionOptions::default(),
            floor: 1e-14,
            dressed_start: true,
            spectral: SpectralOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageRow {
    pub rate: f64,
    /// Leakage out of the tracked level at the end of the sweep.
    pub final_leakage: f64,
    /// Largest leakage seen during the sweep, including virtual admixture near the gap minimum.
    pub max_leakage: f64,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageTable {
    pub level: usize,
    pub rows: Vec<LeakageRow>,
    /// Correlation of `ln(final leakage)` with `1/rate` over uncensored rows.
    pub correlation: Option<f64>,
}

/// Sweeps from `start` to `end` at each rate (parameter distance per unit
/// time) and records the population lost from `level`.
pub fn leakage_scan(
    model: &dyn FastModel,
    start: &ParameterPoint,
    end: &ParameterPoint,
    rates: &[f64],
    level: usize,
    opts: &LeakageOptions,
) -> Result<LeakageTable> {
    if rates.is_empty() || rates.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidParameter("rates must be positive".into()));
    }
    let rows: Vec<Result<LeakageRow>> = rates
        .par_iter()
        .map(|&rate| {
            let path = DrivePath::sweep(start.coords().to_vec(), end.coords(), rate)?;
            let psi0 = start_state(model, &path, level, opts.dressed_start, &opts.spectral)?;
            let rec = driven_evolution(model, &path, &psi0, level, &opts.evolution)?;
            let final_leakage = rec.final_leakage().unwrap_or(0.0);
            Ok(LeakageRow {
                rate,
                final_leakage,
                max_leakage: rec.max_leakage().unwrap_or(0.0),
                censored: final_leakage < opts.floor,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let kept: Vec<&LeakageRow> = rows.iter().filter(|r| !r.censored).collect();
    let correlation = if kept.len() >= 3 {
        let x: Vec<f64> = kept.iter().map(|r| 1.0 / r.rate).collect();
        let y: Vec<f64> = kept.iter().map(|r| r.final_leakage.ln()).collect();
        Some(analysis::correlation(&x, &y)?)
    } else {
        None
    };
    Ok(LeakageTable { level, rows, correlation })
}
