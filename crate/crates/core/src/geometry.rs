//! Geometric content of an adiabatic level: Berry connection and curvature,
//! quantum metric, induced inertia, induced scalar potential, and the
//! assembled effective-field record with the total inertia in place of the
//! primitive one.
//!
//! With `c_i(m) = <m|d_i n>` from [`crate::spectral`]:
//!
//! ```text
//! T_ij = sum_{m != n} conj(c_i(m)) c_j(m)
//! g_ij = Re T_ij,     F_ij = -2 hbar Im T_ij
//! I_ij = 2 hbar^2 Re sum_{m != n} conj(c_i(m)) c_j(m) / (E_m - E_n)
//! Phi  = hbar^2 Q_ij g_ij / 2
//! ```
//!
//! `F` carries one power of `hbar` so that the loop integral of `A` equals the
//! surface integral of `F`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, RMatrix};
use crate::models::FastModel;
use crate::spectral::{
    couplings_from, eigensystem, pivot_index, CouplingMatrix, ParameterPoint, SpectralData,
    SpectralOptions,
};

/// Spectral data and derivative couplings of one level at one point.
#[derive(Debug, Clone)]
pub struct LevelGeometry {
    pub spectral: SpectralData,
    pub couplings: CouplingMatrix,
    pub hbar: f64,
}

impl LevelGeometry {
    pub fn compute(
        model: &dyn FastModel,
        point: &ParameterPoint,
        n: usize,
        opts: &SpectralOptions,
    ) -> Result<Self> {
        model.check_point(point)?;
        let spectral = eigensystem(&model.hamiltonian(point), point)?;
        Self::from_spectral(spectral, &model.gradients(point), n, model.hbar(), opts)
    }

    pub fn from_spectral(
        spectral: SpectralData,
        gradients: &[CMatrix],
        n: usize,
        hbar: f64,
        opts: &SpectralOptions,
    ) -> Result<Self> {
        let couplings = couplings_from(&spectral, gradients, n, opts)?;
        Ok(Self { spectral, couplings, hbar })
    }

    pub fn level(&self) -> usize {
        self.couplings.level
    }

    pub fn n_params(&self) -> usize {
        self.couplings.n_params()
    }

    pub fn energy(&self) -> f64 {
        self.spectral.energies[self.level()]
    }

    /// `A_i = i hbar <n|d_i n>` in the largest-component gauge of the stored eigenvectors.
    ///
    /// Keeping the pivot component `k` of `|n>` real fixes the diagonal derivative:
    /// `<n|d_i n> = -i Im(sum_m c_i(m) <k|m>) / <k|n>`.
    pub fn connection(&self) -> Vec<f64> {
        let n = self.level();
        let ket = self.spectral.state(n);
        let k = pivot_index(&ket);
        let pivot = ket[k];
        (0..self.n_params())
            .map(|i| {
                let mut s = num_complex::Complex64::new(0.0, 0.0);
                for m in 0..self.spectral.dim() {
                    if m != n {
                        s += self.couplings.get(i, m) * self.spectral.states[(k, m)];
                    }
                }
                // pivot may carry a residual phase if the caller rephased the states
                let ratio = s / pivot;
                self.hbar * ratio.im
            })
            .collect()
    }

    /// The complex tensor `T_ij`.
    pub fn geometric_tensor(&self) -> CMatrix {
        let d = self.n_params();
        let n = self.level();
        let mut t = CMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let mut s = num_complex::Complex64::new(0.0, 0.0);
                for m in 0..self.spectral.dim() {
                    if m != n {
                        s += self.couplings.get(i, m).conj() * self.couplings.get(j, m);
                    }
                }
                t[(i, j)] = s;
            }
        }
        t
    }

    /// `(g, F)`
    pub fn metric_and_curvature(&self) -> (RMatrix, RMatrix) {
        let t = self.geometric_tensor();
        let g = linalg::symmetrize(&t.map(|z| z.re));
        let f = t.map(|z| -2.0 * self.hbar * z.im);
        let f = (&f - f.transpose()) * 0.5;
        (g, f)
    }

    pub fn induced_inertia(&self) -> Result<RMatrix> {
        let d = self.n_params();
        let n = self.level();
        let en = self.energy();
        let mut out = RMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for m in 0..self.spectral.dim() {
                    if m != n {
                        let z = self.couplings.get(i, m).conj() * self.couplings.get(j, m);
                        s += z.re / (self.spectral.energies[m] - en);
                    }
                }
                out[(i, j)] = 2.0 * self.hbar * self.hbar * s;
            }
        }
        check_symmetric(&out, "induced inertia")?;
        Ok(linalg::symmetrize(&out))
    }
}

fn check_symmetric(m: &RMatrix, what: &str) -> Result<()> {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let anti = (m - m.transpose()).amax() / 2.0;
    if anti > 1e-10 * scale.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "{what} has antisymmetric part {anti:e}"
        )));
    }
    Ok(())
}

/// Induced inertia of `n_occupied` independent fermions filling the lowest
/// orbitals: the single-particle formula summed over particle-hole pairs only.
/// Degeneracies inside the occupied or the empty set are harmless; the
/// Fermi-level gap must exceed the tolerance.
pub fn particle_hole_inertia(
    spectral: &SpectralData,
    gradients: &[CMatrix],
    n_occupied: usize,
    hbar: f64,
    opts: &SpectralOptions,
) -> Result<RMatrix> {
    let dim = spectral.dim();
    if n_occupied == 0 || n_occupied >= dim {
        return Err(Error::InvalidParameter(format!(
            "occupied orbitals {n_occupied} must be in 1..{dim}"
        )));
    }
    let gap = spectral.energies[n_occupied] - spectral.energies[n_occupied - 1];
    let tol = spectral.gap_tolerance(opts.gap_tol_rel);
    if gap <= tol {
        return Err(Error::Degenerate {
            level: n_occupied - 1,
            other: n_occupied,
            gap,
            tolerance: tol,
        });
    }
    let d = gradients.len();
    // <m|d_i H|n> for particle-hole pairs
    let mut elems: Vec<CMatrix> = Vec::with_capacity(d);
    for g in gradients {
        let full = spectral.states.adjoint() * g * &spectral.states;
        elems.push(full);
    }
    let mut out = RMatrix::zeros(d, d);
    for n in 0..n_occupied {
        for m in n_occupied..dim {
            let de = spectral.energies[m] - spectral.energies[n];
            let w = 2.0 * hbar * hbar / (de * de * de);
            for i in 0..d {
                for j in 0..d {
                    let z = elems[i][(m, n)].conj() * elems[j][(m, n)];
                    out[(i, j)] += w * z.re;
                }
            }
        }
    }
    Ok(linalg::symmetrize(&out))
}

pub fn berry_connection(
    model: &dyn FastModel,
    point: &ParameterPoint,
    n: usize,
    opts: &SpectralOptions,
) -> Result<Vec<f64>> {
    Ok(LevelGeometry::compute(model, point, n, opts)?.connection())
}

/// Finite-difference connection from the gauge-fixed eigenvectors at `X +- h e_i`:
/// `A_i = -hbar arg<n(X - h)|n(X + h)> / 2h`.
///
/// Slower and less accurate than [`berry_connection`]; useful as a cross-check.
/// Fails with a gauge inconsistency if the fixing component changes across the stencil.
pub fn berry_connection_fd(
    model: &dyn FastModel,
    point: &ParameterPoint,
    n: usize,
    h: f64,
    opts: &SpectralOptions,
) -> Result<Vec<f64>> {
    let centre = LevelGeometry::compute(model, point, n, opts)?;
    let k = pivot_index(&centre.spectral.state(n));
    let hbar = model.hbar();
    (0..model.n_params())
        .map(|i| {
            let plus = eigensystem(&model.hamiltonian(&point.shifted(i, h)), point)?;
            let minus = eigensystem(&model.hamiltonian(&point.shifted(i, -h)), point)?;
            let (vp, vm) = (plus.state(n), minus.state(n));
            if pivot_index(&vp) != k || pivot_index(&vm) != k {
                return Err(Error::GaugeInconsistency {
                    residue: (vp[k].norm() - vm[k].norm()).abs(),
                });
            }
            let overlap = vm.dotc(&vp);
            Ok(-hbar * overlap.arg() / (2.0 * h))
        })
        .collect()
}

/// `(g, F)` of level `n`.
pub fn quantum_geometric_tensor(
    model: &dyn FastModel,
    point: &ParameterPoint,
    n: usize,
    opts: &SpectralOptions,
) -> Result<(RMatrix, RMatrix)> {
    Ok(LevelGeometry::compute(model, point, n, opts)?.metric_and_curvature())
}

pub fn induced_inertia(
    model: &dyn FastModel,
    point: &ParameterPoint,
    n: usize,
    opts: &SpectralOptions,
) -> Result<RMatrix> {
    LevelGeometry::compute(model, point, n, opts)?.induced_inertia()
}

/// `Phi = hbar^2 Q_ij g_ij / 2` for a positive definite inverse inertia `Q`.
pub fn scalar_potential(g: &RMatrix, q: &RMatrix, hbar: f64) -> Result<f64> {
    if g.shape() != q.shape() {
        return Err(Error::DimensionMismatch { expected: q.nrows(), found: g.nrows() });
    }
    if !linalg::is_positive_definite(q) {
        return Err(Error::NotPositiveDefinite { what: "inverse inertia" });
    }
    Ok(0.5 * hbar * hbar * q.component_mul(g).sum())
}

/// `(I_total, Q_total)` with `I_total = I_prim + I_ind` and `Q_total = I_total^-1`.
pub fn total_inertia(i_prim: &RMatrix, i_ind: &RMatrix) -> Result<(RMatrix, RMatrix)> {
    if i_prim.shape() != i_ind.shape() {
        return Err(Error::DimensionMismatch { expected: i_prim.nrows(), found: i_ind.nrows() });
    }
    let total = linalg::symmetrize(&(i_prim + i_ind));
    let q = linalg::spd_inverse(&total, "total inertia")?;
    let d = total.nrows();
    let defect = (&q * &total - RMatrix::identity(d, d)).amax();
    if defect > 1e-10 {
        return Err(Error::InvalidParameter(format!(
            "total inertia is ill-conditioned: |Q I - 1| = {defect:e}"
        )));
    }
    Ok((total, linalg::symmetrize(&q)))
}

/// Per-point geometric record for one level.
#[derive(Debug, Clone, Serialize)]
pub struct GeometricTensors {
    pub point: Vec<f64>,
    pub level: usize,
    pub energy: f64,
    pub connection: Vec<f64>,
    pub metric: RMatrix,
    pub curvature: RMatrix,
    pub induced_inertia: RMatrix,
    /// `hbar^2 g_ij Q_ij / 2` with the primitive inverse inertia.
    pub scalar_potential: f64,
    pub hbar: f64,
}

/// Ingredients of the effective slow Hamiltonian
/// `H_eff = V_BO + (P - A) Q~ (P - A) / 2 + hbar^2 g_ij Q~_ij / 2`.
#[derive(Debug, Clone, Serialize)]
pub struct EffectiveField {
    pub point: Vec<f64>,
    pub level: usize,
    pub v_bo: f64,
    pub connection: Vec<f64>,
    pub total_inertia: RMatrix,
    pub inverse_inertia: RMatrix,
    pub scalar_potential: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridRecord {
    pub tensors: GeometricTensors,
    pub field: EffectiveField,
}

/// Evaluates the full geometric package of one level of `model` with a fixed primitive inertia.
#[derive(Clone, Copy)]
pub struct GeometryEvaluator<'a> {
    pub model: &'a dyn FastModel,
    pub level: usize,
    pub primitive_inertia: &'a RMatrix,
    pub options: SpectralOptions,
}

impl<'a> GeometryEvaluator<'a> {
    pub fn new(
        model: &'a dyn FastModel,
        level: usize,
        primitive_inertia: &'a RMatrix,
        options: SpectralOptions,
    ) -> Result<Self> {
        let d = model.n_params();
        if primitive_inertia.shape() != (d, d) {
            return Err(Error::DimensionMismatch { expected: d, found: primitive_inertia.nrows() });
        }
        if level >= model.dim() {
            return Err(Error::InvalidParameter(format!(
                "level {level} out of range for dimension {}",
                model.dim()
            )));
        }
        Ok(Self { model, level, primitive_inertia, options })
    }

    pub fn evaluate(&self, point: &ParameterPoint) -> Result<GridRecord> {
        let geo = LevelGeometry::compute(self.model, point, self.level, &self.options)?;
        record_from(&geo, self.primitive_inertia)
    }
}

/// Builds both records from precomputed level geometry.
pub fn record_from(geo: &LevelGeometry, i_prim: &RMatrix) -> Result<GridRecord> {
    let hbar = geo.hbar;
    let connection = geo.connection();
    let (metric, curvature) = geo.metric_and_curvature();
    let i_ind = geo.induced_inertia()?;
    let q_prim = linalg::spd_inverse(i_prim, "primitive inertia")?;
    let phi = scalar_potential(&metric, &q_prim, hbar)?;
    let (total, q_total) = total_inertia(i_prim, &i_ind)?;
    let phi_tilde = scalar_potential(&metric, &q_total, hbar)?;
    let point = geo.spectral.point.coords().to_vec();
    Ok(GridRecord {
        tensors: GeometricTensors {
            point: point.clone(),
            level: geo.level(),
            energy: geo.energy(),
            connection: connection.clone(),
            metric,
            curvature,
            induced_inertia: i_ind,
            scalar_potential: phi,
            hbar,
        },
        field: EffectiveField {
            point,
            level: geo.level(),
            v_bo: geo.energy(),
            connection,
            total_inertia: total,
            inverse_inertia: q_total,
            scalar_potential: phi_tilde,
        },
    })
}

pub fn effective_field(
    model: &dyn FastModel,
    point: &ParameterPoint,
    n: usize,
    i_prim: &RMatrix,
    opts: &SpectralOptions,
) -> Result<EffectiveField> {
    Ok(GeometryEvaluator::new(model, n, i_prim, *opts)?.evaluate(point)?.field)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GridOptions {
    /// Abort on the first failing point instead of recording it.
    pub fail_fast: bool,
}

/// Evaluates every point of `grid` in parallel; results keep the input order.
///
/// With `fail_fast` the first failure in input order is returned as the error.
pub fn geometry_grid(
    model: &dyn FastModel,
    grid: &[ParameterPoint],
    n: usize,
    i_prim: &RMatrix,
    opts: &SpectralOptions,
    grid_opts: GridOptions,
) -> Result<Vec<Result<GridRecord>>> {
    let eval = GeometryEvaluator::new(model, n, i_prim, *opts)?;
    let out: Vec<Result<GridRecord>> = grid.par_iter().map(|p| eval.evaluate(p)).collect();
    if grid_opts.fail_fast {
        if let Some(Err(e)) = out.iter().find(|r| r.is_err()) {
            return Err(e.clone());
        }
    }
    Ok(out)
}

/// Identity scaled by `mass`, the usual isotropic primitive inertia.
pub fn isotropic_inertia(d: usize, mass: f64) -> RMatrix {
    DMatrix::identity(d, d) * mass
}
