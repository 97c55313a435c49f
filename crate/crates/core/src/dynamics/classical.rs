use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CVector, RMatrix};
use crate::models::FastModel;
use crate::spectral::{eigensystem, ParameterPoint, SpectralData};

use super::evolution::{propagate, TrajectoryRecord, STEP_LIMIT};
use super::fields::{FieldSample, FieldSource};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicalOptions {
    pub dt: f64,
    pub stride: usize,
    /// Fast-step limit `dt * range / hbar` (coupled runs only).
    pub step_limit: f64,
    pub keep_states: bool,
}

impl Default for ClassicalOptions {
    fn default() -> Self {
        Self { dt: 0.01, stride: 1, step_limit: STEP_LIMIT, keep_states: false }
    }
}

impl ClassicalOptions {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, ..Self::default() }
    }

    fn steps(&self, duration: f64) -> Result<(usize, f64)> {
        if !(self.dt > 0.0) || self.stride == 0 || !(duration >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt {} / stride {} / duration {duration}",
                self.dt, self.stride
            )));
        }
        let n = ((duration / self.dt) - 1e-9).ceil().max(0.0) as usize;
        Ok((n, if n > 0 { duration / n as f64 } else { 0.0 }))
    }
}

/// Initial slow momentum for [`effective_trajectory`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialMomentum {
    /// `P`, conjugate to `X`; the kinetic momentum is `P - A(X0)`.
    Canonical(Vec<f64>),
    /// `I~ dX/dt`
    Kinetic(Vec<f64>),
    Velocity(Vec<f64>),
}

fn mat_vec(m: &RMatrix, v: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum()).collect()
}

fn quad(m: &RMatrix, a: &[f64], b: &[f64]) -> f64 {
    let mb = mat_vec(m, b);
    a.iter().zip(&mb).map(|(x, y)| x * y).sum()
}

/// `(dX/dt, dpi/dt)` for kinetic momentum `pi`:
/// `dX/dt = Q~ pi`, `dpi_i/dt = -d_i U + (1/2) Xdot.d_i I~.Xdot + F_ij Xdot_j`.
fn effective_rhs(s: &FieldSample, pi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let xdot = mat_vec(&s.inverse_inertia, pi);
    let lorentz = mat_vec(&s.curvature, &xdot);
    let pidot = (0..pi.len())
        .map(|i| -s.potential_gradient[i] + 0.5 * quad(&s.inertia_gradient[i], &xdot, &xdot) + lorentz[i])
        .collect();
    (xdot, pidot)
}

fn effective_energy(s: &FieldSample, pi: &[f64]) -> f64 {
    0.5 * quad(&s.inverse_inertia, pi, pi) + s.potential
}

fn axpy(x: &[f64], a: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(x, y)| x + a * y).collect()
}

/// Classical motion under `H_eff = V_BO + (P - A).Q~.(P - A)/2 + Phi~`, integrated
/// with classical RK4 in the gauge-invariant variables `(X, pi = P - A)`.
///
/// Leaving the domain of `fields` ends the run early with `truncated` set.
/// The record stores kinetic momenta.
pub fn effective_trajectory(
    fields: &dyn FieldSource,
    x0: &[f64],
    momentum: &InitialMomentum,
    duration: f64,
    opts: &ClassicalOptions,
) -> Result<TrajectoryRecord> {
    let d = fields.n_params();
    if x0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: x0.len() });
    }
    let (steps, dt) = opts.steps(duration)?;
    let s0 = fields.sample(x0)?;
    let pi0 = match momentum {
        InitialMomentum::Canonical(p) => axpy(p, -1.0, &s0.connection),
        InitialMomentum::Kinetic(p) => p.clone(),
        InitialMomentum::Velocity(v) => mat_vec(&s0.total_inertia, v),
    };
    if pi0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: pi0.len() });
    }
    if !linalg::is_positive_definite(&s0.total_inertia) {
        return Err(Error::NotPositiveDefinite { what: "total inertia" });
    }

    let mut rec = TrajectoryRecord::default();
    let push = |rec: &mut TrajectoryRecord, t: f64, x: &[f64], pi: &[f64], s: &FieldSample| {
        rec.times.push(t);
        rec.positions.push(x.to_vec());
        rec.momenta.push(pi.to_vec());
        rec.conserved_energy.push(effective_energy(s, pi));
    };
    push(&mut rec, 0.0, x0, &pi0, &s0);
    let (mut x, mut pi) = (x0.to_vec(), pi0);
    let mut sample = s0;
    for k in 0..steps {
        let stage = |x: &[f64], pi: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
            Ok(effective_rhs(&fields.sample(x)?, pi))
        };
        let result = (|| -> Result<(Vec<f64>, Vec<f64>)> {
            let (k1x, k1p) = effective_rhs(&sample, &pi);
            let (k2x, k2p) = stage(&axpy(&x, dt / 2.0, &k1x), &axpy(&pi, dt / 2.0, &k1p))?;
            let (k3x, k3p) = stage(&axpy(&x, dt / 2.0, &k2x), &axpy(&pi, dt / 2.0, &k2p))?;
            let (k4x, k4p) = stage(&axpy(&x, dt, &k3x), &axpy(&pi, dt, &k3p))?;
            let nx = (0..d).map(|i| x[i] + dt / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i])).collect();
            let np = (0..d).map(|i| pi[i] + dt / 6.0 * (k1p[i] + 2.0 * k2p[i] + 2.0 * k3p[i] + k4p[i])).collect();
            Ok((nx, np))
        })();
        let next = result.and_then(|(nx, np)| Ok((fields.sample(&nx)?, nx, np)));
        match next {
            Ok((s, nx, np)) => {
                x = nx;
                pi = np;
                sample = s;
            }
            Err(Error::OutOfDomain(at)) => {
                log::warn!("effective trajectory left the field domain at {at:?}, t = {}", k as f64 * dt);
                rec.truncated = true;
                rec.steps = k;
                if rec.times.last() != Some(&(k as f64 * dt)) {
                    push(&mut rec, k as f64 * dt, &x, &pi, &sample);
                }
                return Ok(rec);
            }
            Err(e) => return Err(e),
        }
        if !linalg::is_positive_definite(&sample.total_inertia) {
            return Err(Error::NotPositiveDefinite { what: "total inertia" });
        }
        if (k + 1) % opts.stride == 0 || k + 1 == steps {
            push(&mut rec, (k + 1) as f64 * dt, &x, &pi, &sample);
        }
    }
    rec.steps = steps;
    Ok(rec)
}

/// `int_0^dt exp(i w s) ds`
fn phase_integral(w: f64, dt: f64) -> Complex64 {
    let half = 0.5 * w * dt;
    let sinc = if half.abs() < 1e-8 { 1.0 - half * half / 6.0 } else { half.sin() / half };
    Complex64::from_polar(dt * sinc, half)
}

/// Mixed quantum-classical reference: classical `X, P` with the primitive
/// inertia, force `-<psi|d_i H|psi>`, and `i hbar dpsi/dt = H(X) psi`.
///
/// Strang splitting: half drift of `X`, then the exact joint flow of `(psi, P)`
/// at fixed `X` (the momentum kick is integrated in closed form over the
/// exact fast evolution), then another half drift.  The scheme is symplectic
/// and second order; the fast propagation is exact for each frozen `X`.
#[allow(clippy::too_many_arguments)]
pub fn coupled_reference(
    model: &dyn FastModel,
    primitive_inertia: &RMatrix,
    x0: &[f64],
    p0: &[f64],
    psi0: &CVector,
    level: usize,
    duration: f64,
    opts: &ClassicalOptions,
) -> Result<TrajectoryRecord> {
    let d = model.n_params();
    let dim = model.dim();
    if x0.len() != d || p0.len() != d || primitive_inertia.shape() != (d, d) {
        return Err(Error::DimensionMismatch { expected: d, found: x0.len() });
    }
    if psi0.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: psi0.len() });
    }
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized { norm: psi0.norm() });
    }
    if level >= dim {
        return Err(Error::InvalidParameter(format!("level {level} out of range")));
    }
    let q = linalg::spd_inverse(primitive_inertia, "primitive inertia")?;
    let (steps, dt) = opts.steps(duration)?;
    let hbar = model.hbar();

    let spectrum_at = |x: &[f64]| -> Result<(ParameterPoint, SpectralData)> {
        let p = ParameterPoint::new(x.to_vec())?;
        model.check_point(&p)?;
        let s = eigensystem(&model.hamiltonian(&p), &p)?;
        let product = opts.dt * s.spectral_range() / hbar;
        if product >= opts.step_limit {
            return Err(Error::StepTooLarge { dt: opts.dt, product, limit: opts.step_limit });
        }
        Ok((p, s))
    };

    let mut rec = TrajectoryRecord { level, ..Default::default() };
    let push = |rec: &mut TrajectoryRecord, t: f64, x: &[f64], p: &[f64], psi: &CVector| -> Result<()> {
        let (pt, s) = spectrum_at(x)?;
        let h = model.hamiltonian(&pt);
        rec.positions.push(x.to_vec());
        rec.momenta.push(p.to_vec());
        rec.push_quantum(t, psi, &s, &h, opts.keep_states);
        let fast = psi.dotc(&(&h * psi)).re;
        rec.conserved_energy.push(0.5 * quad(&q, p, p) + fast);
        Ok(())
    };
    let (mut x, mut p, mut psi) = (x0.to_vec(), p0.to_vec(), psi0.clone());
    push(&mut rec, 0.0, &x, &p, &psi)?;
    for k in 0..steps {
        x = axpy(&x, dt / 2.0, &mat_vec(&q, &p));
        let (pt, s) = spectrum_at(&x)?;
        let b = s.states.adjoint() * &psi;
        for i in 0..d {
            let g = s.states.adjoint() * model.gradient(&pt, i) * &s.states;
            let mut impulse = Complex64::new(0.0, 0.0);
            for a in 0..dim {
                for c in 0..dim {
                    let w = (s.energies[a] - s.energies[c]) / hbar;
                    impulse += b[a].conj() * b[c] * g[(a, c)] * phase_integral(w, dt);
                }
            }
            p[i] -= impulse.re;
        }
        psi = propagate(&s, &psi, dt, hbar);
        x = axpy(&x, dt / 2.0, &mat_vec(&q, &p));
        if (k + 1) % opts.stride == 0 || k + 1 == steps {
            push(&mut rec, (k + 1) as f64 * dt, &x, &p, &psi)?;
        }
    }
    rec.steps = steps;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::fields::UniformField;
    use crate::models::StaticModel;

    #[test]
    fn free_motion_is_uniform() {
        let f = UniformField::free(RMatrix::identity(2, 2) * 2.0);
        let rec = effective_trajectory(&f, &[0.0, 1.0], &InitialMomentum::Kinetic(vec![1.0, -0.5]), 3.0, &ClassicalOptions::with_dt(0.1)).unwrap();
        let last = rec.positions.last().unwrap();
        assert!((last[0] - 1.5).abs() < 1e-12 && (last[1] - 0.25).abs() < 1e-12);
        assert!(rec.energy_drift() < 1e-14);
    }

    #[test]
    fn constant_curvature_gives_cyclotron_orbit() {
        let (mass, b) = (2.0, 0.5);
        let mut f = UniformField::free(RMatrix::identity(2, 2) * mass);
        f.curvature = RMatrix::from_row_slice(2, 2, &[0.0, b, -b, 0.0]);
        let period = 2.0 * std::f64::consts::PI * mass / b;
        let rec = effective_trajectory(&f, &[0.0, 0.0], &InitialMomentum::Velocity(vec![0.3, 0.0]), period, &ClassicalOptions::with_dt(period / 2000.0)).unwrap();
        let last = rec.positions.last().unwrap();
        assert!(last[0].abs() < 1e-8 && last[1].abs() < 1e-8, "{last:?}");
        let radius = mass * 0.3 / b;
        let max_y = rec.positions.iter().map(|x| x[1].abs()).fold(0.0, f64::max);
        assert!((max_y - 2.0 * radius).abs() < 1e-4);
        assert!(rec.energy_drift() < 1e-10);
    }

    #[test]
    fn x_independent_coupled_run_drifts_freely() {
        let h = crate::linalg::to_complex(&RMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 1.0]));
        let m = StaticModel::new(h.clone(), 1, 1.0).unwrap();
        let mut psi0 = CVector::zeros(2);
        psi0[0] = Complex64::new(1.0, 0.0);
        let opts = ClassicalOptions { keep_states: true, ..ClassicalOptions::with_dt(0.01) };
        let rec = coupled_reference(&m, &RMatrix::identity(1, 1), &[0.0], &[0.7], &psi0, 0, 2.0, &opts).unwrap();
        assert!((rec.positions.last().unwrap()[0] - 1.4).abs() < 1e-12);
        assert!(rec.momenta.iter().all(|p| p[0] == 0.7));
        let exact = linalg::unitary_propagator(&h, 2.0, 1.0) * &psi0;
        assert!((rec.states.last().unwrap() - exact).norm() < 1e-12);
    }

    #[test]
    fn phase_integral_limits() {
        assert!((phase_integral(0.0, 0.3) - Complex64::new(0.3, 0.0)).norm() < 1e-16);
        let w = 2.0;
        let exact = (Complex64::new(0.0, w * 0.3).exp() - 1.0) / Complex64::new(0.0, w);
        assert!((phase_integral(w, 0.3) - exact).norm() < 1e-15);
    }
}
