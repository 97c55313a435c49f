//! Hermitian eigendecomposition, gauge fixing and derivative couplings.
//!
//! Everything downstream (connection, metric, curvature, induced inertia)
//! is built from the off-diagonal couplings `<m|d_i n>`, which are obtained
//! from the exact parameter gradient of the Hamiltonian by the
//! sum-over-states identity
//!
//! ```text
//! <m|d_i n> = <m|d_i H|n> / (E_n - E_m),   m != n.
//! ```
//!
//! Eigenvectors are never differentiated numerically in production code.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::models::FastModel;

/// Tolerance on `|H - H^dagger| / |H|` accepted by [`eigensystem`].
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Minimum per-level overlap between neighbouring path points.
pub const TRANSPORT_OVERLAP_MIN: f64 = 0.5;

/// A point in the space of slow parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint(Vec<f64>);

impl ParameterPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidParameter(
                "parameter point needs at least one coordinate".into(),
            ));
        }
        if let Some(bad) = coords.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite coordinate {bad} in parameter point"
            )));
        }
        Ok(Self(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Copy of this point displaced by `delta` along coordinate `i`.
    pub fn shifted(&self, i: usize, delta: f64) -> Self {
        let mut c = self.0.clone();
        c[i] += delta;
        Self(c)
    }

    /// `self + t * direction`.
    pub fn offset(&self, direction: &[f64], t: f64) -> Self {
        Self(
            self.0
                .iter()
                .zip(direction)
                .map(|(x, d)| x + t * d)
                .collect(),
        )
    }
}

impl From<f64> for ParameterPoint {
    fn from(x: f64) -> Self {
        Self(vec![x])
    }
}

/// Phase convention in force for a set of eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gauge {
    /// Largest-modulus component of every eigenvector made real positive.
    LargestComponent,
    /// Parallel transported along a discretized path; `step` is the index on that path.
    Transported { step: usize },
}

#[derive(Debug, Clone)]
pub struct SpectralData {
    /// Ascending.
    pub energies: Vec<f64>,
    /// Eigenvectors as columns, orthonormal.
    pub states: CMatrix,
    pub point: ParameterPoint,
    pub gauge: Gauge,
}

impl SpectralData {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn state(&self, n: usize) -> CVector {
        self.states.column(n).into_owned()
    }

    pub fn spectral_range(&self) -> f64 {
        self.energies[self.dim() - 1] - self.energies[0]
    }

    /// Absolute gap tolerance: `rel * spectral range`.
    pub fn gap_tolerance(&self, rel: f64) -> f64 {
        rel * self.spectral_range()
    }

    /// Nearest other level to `n` and its distance.
    pub fn nearest_level(&self, n: usize) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (m, e) in self.energies.iter().enumerate() {
            if m == n {
                continue;
            }
            let gap = (e - self.energies[n]).abs();
            if gap < best.1 {
                best = (m, gap);
            }
        }
        best
    }

    /// Fails unless every other level is farther than `tol` from level `n`.
    pub fn require_gap(&self, n: usize, tol: f64) -> Result<()> {
        if n >= self.dim() {
            return Err(Error::InvalidParameter(format!(
                "level {n} out of range for dimension {}",
                self.dim()
            )));
        }
        let (other, gap) = self.nearest_level(n);
        if gap <= tol {
            return Err(Error::Degenerate {
                level: n,
                other,
                gap,
                tolerance: tol,
            });
        }
        Ok(())
    }

    /// `sum_n E_n |n><n|`
    pub fn reconstruct(&self) -> CMatrix {
        let mut scaled = self.states.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= linalg::c(self.energies[j]);
        }
        scaled * self.states.adjoint()
    }

    /// Max-norm of `V^dagger V - 1`.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.dim();
        (self.states.adjoint() * &self.states - CMatrix::identity(n, n))
            .iter()
            .fold(0.0_f64, |acc, z| acc.max(z.norm()))
    }

    /// Multiply eigenvector `n` by `e^{i phase}`.
    pub fn rephase(&mut self, n: usize, phase: f64) {
        let f = Complex64::from_polar(1.0, phase);
        self.states.column_mut(n).iter_mut().for_each(|z| *z *= f);
    }
}

/// Eigendecomposition of a Hermitian matrix with the deterministic phase convention.
pub fn eigensystem(h: &CMatrix, point: &ParameterPoint) -> Result<SpectralData> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: h.ncols(),
        });
    }
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "Hilbert space dimension {n} < 2"
        )));
    }
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidParameter(
            "Hamiltonian has non-finite entries".into(),
        ));
    }
    let defect = linalg::hermiticity_defect(h);
    if defect > HERMITICITY_TOL {
        return Err(Error::NonHermitian { norm: defect });
    }
    let max_iter = 1000 * n;
    let (values, vectors): (Vec<f64>, CMatrix) = if linalg::is_real(h) {
        let re = linalg::symmetrize(&h.map(|z| z.re));
        let eig = nalgebra::SymmetricEigen::try_new(re, f64::EPSILON, max_iter)
            .ok_or_else(|| Error::Eigensolver("real symmetric QR did not converge".into()))?;
        (eig.eigenvalues.iter().copied().collect(), linalg::to_complex(&eig.eigenvectors))
    } else {
        let herm = (h + h.adjoint()) * linalg::c(0.5);
        let eig = nalgebra::SymmetricEigen::try_new(herm, f64::EPSILON, max_iter)
            .ok_or_else(|| Error::Eigensolver("Hermitian QR did not converge".into()))?;
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let energies: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    let mut states = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = vectors.column(src).into_owned();
        fix_phase(&mut col);
        states.set_column(dst, &col);
    }
    Ok(SpectralData {
        energies,
        states,
        point: point.clone(),
        gauge: Gauge::LargestComponent,
    })
}

/// Index of the component that carries the phase convention: the first one
/// whose modulus is within 1e-10 (relative) of the maximum.
pub fn pivot_index(v: &CVector) -> usize {
    let max = v.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
    v.iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-10))
        .unwrap_or(0)
}

/// Rotate `v` so its pivot component is real and positive.
pub fn fix_phase(v: &mut CVector) {
    let k = pivot_index(v);
    let z = v[k];
    let r = z.norm();
    if r > 0.0 {
        let f = z.conj() / r;
        v.iter_mut().for_each(|x| *x *= f);
        v[k] = Complex64::new(v[k].re, 0.0);
    }
}

/// Rephase every eigenvector along `path` so that `<n(k)|n(k+1)>` is real positive.
pub fn parallel_transport_gauge(path: &[SpectralData]) -> Result<Vec<SpectralData>> {
    let mut out: Vec<SpectralData> = Vec::with_capacity(path.len());
    for (step, data) in path.iter().enumerate() {
        let mut next = data.clone();
        next.gauge = Gauge::Transported { step };
        if let Some(prev) = out.last() {
            if prev.dim() != next.dim() {
                return Err(Error::DimensionMismatch {
                    expected: prev.dim(),
                    found: next.dim(),
                });
            }
            for n in 0..next.dim() {
                let overlap = prev.states.column(n).dotc(&next.states.column(n));
                let modulus = overlap.norm();
                if modulus <= TRANSPORT_OVERLAP_MIN {
                    return Err(Error::PathTooCoarse {
                        step,
                        level: n,
                        overlap: modulus,
                    });
                }
                let f = overlap.conj() / modulus;
                next.states.column_mut(n).iter_mut().for_each(|z| *z *= f);
            }
        }
        out.push(next);
    }
    Ok(out)
}

/// Geometric phase integral `oint A . dX` of level `n` around the discretized
/// loop `path` (last point joined back to the first), as `-hbar * sum arg <n_k|n_k+1>`.
/// The result is gauge invariant modulo `2 pi hbar` and lies in `(-pi hbar, pi hbar]`.
pub fn loop_connection_integral(path: &[SpectralData], n: usize, hbar: f64) -> Result<f64> {
    if path.len() < 3 {
        return Err(Error::InvalidParameter(
            "a closed loop needs at least three points".into(),
        ));
    }
    let mut product = Complex64::new(1.0, 0.0);
    for k in 0..path.len() {
        let a = &path[k];
        let b = &path[(k + 1) % path.len()];
        let overlap = a.states.column(n).dotc(&b.states.column(n));
        if overlap.norm() <= TRANSPORT_OVERLAP_MIN {
            return Err(Error::PathTooCoarse {
                step: (k + 1) % path.len(),
                level: n,
                overlap: overlap.norm(),
            });
        }
        product *= overlap / overlap.norm();
    }
    Ok(-hbar * product.arg())
}

/// Off-diagonal derivative couplings of one level.
///
/// `entries[(i, m)] = <m|d_i n>` for `m != n`; the diagonal column `n` is zero.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    pub level: usize,
    pub entries: DMatrix<Complex64>,
}

impl CouplingMatrix {
    pub fn n_params(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, m: usize) -> Complex64 {
        self.entries[(i, m)]
    }
}

/// Options shared by the coupling-based computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    /// Gap tolerance relative to the spectral range.
    pub gap_tol_rel: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { gap_tol_rel: 1e-8 }
    }
}

/// Sum-over-states couplings from an already computed eigensystem and the
/// parameter gradients of the Hamiltonian at the same point.
pub fn couplings_from(
    spectral: &SpectralData,
    gradients: &[CMatrix],
    n: usize,
    opts: &SpectralOptions,
) -> Result<CouplingMatrix> {
    spectral.require_gap(n, spectral.gap_tolerance(opts.gap_tol_rel))?;
    let dim = spectral.dim();
    let ket = spectral.state(n);
    let mut entries = DMatrix::zeros(gradients.len(), dim);
    for (i, grad) in gradients.iter().enumerate() {
        if grad.shape() != (dim, dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: grad.nrows(),
            });
        }
        let dh_n = grad * &ket;
        for m in 0..dim {
            if m == n {
                continue;
            }
            let num = spectral.states.column(m).dotc(&dh_n);
            entries[(i, m)] = num / (spectral.energies[n] - spectral.energies[m]);
        }
    }
    Ok(CouplingMatrix { level: n, entries })
}

/// `<m|d_i n>` for all `m != n` at `point`.
pub fn derivative_couplings(
    model: &dyn FastModel,
    point: &ParameterPoint,
    n: usize,
    opts: &SpectralOptions,
) -> Result<CouplingMatrix> {
    model.check_point(point)?;
    let spectral = eigensystem(&model.hamiltonian(point), point)?;
    couplings_from(&spectral, &model.gradients(point), n, opts)
}
