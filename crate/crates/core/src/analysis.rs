//! Post-processing: scaling-exponent fits, correlation, the energy-weighted
//! dipole sum and the induced/primitive inertia ratio.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, RMatrix};
use crate::models::{FastModel, MovingWellModel};
use crate::spectral::{eigensystem, ParameterPoint, SpectralData, SpectralOptions};

/// Minimum number of samples for a power-law fit.
pub const MIN_FIT_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    /// Standard error of the exponent.
    pub std_error: f64,
    pub prefactor: f64,
    pub samples: usize,
    /// `log10(max r / min r)`
    pub decades: f64,
}

/// Least-squares fit of `log value = log c + p log r`.
///
/// Needs at least [`MIN_FIT_SAMPLES`] strictly positive samples spanning a decade in `r`.
pub fn fit_power_law(r: &[f64], values: &[f64]) -> Result<PowerLawFit> {
    if r.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: r.len(), found: values.len() });
    }
    if r.len() < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!(
            "{} samples, need at least {MIN_FIT_SAMPLES}",
            r.len()
        )));
    }
    if let Some(bad) = r.iter().chain(values).find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Fit(format!("non-positive sample {bad}")));
    }
    let (lo, hi) = r.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    let decades = (hi / lo).log10();
    if decades < 1.0 - 1e-9 {
        return Err(Error::Fit(format!("samples span {decades:.3} decades, need 1")));
    }
    let x: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let fit = fit_log_linear_raw(&[x], &y)?;
    Ok(PowerLawFit {
        exponent: fit.exponents[0],
        std_error: fit.std_errors[0],
        prefactor: fit.intercept.exp(),
        samples: r.len(),
        decades,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogLinearFit {
    pub exponents: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub intercept: f64,
}

/// Fits `log y = c + sum_k p_k log x_k` for several positive predictors.
pub fn fit_log_linear(predictors: &[Vec<f64>], values: &[f64]) -> Result<LogLinearFit> {
    for x in predictors.iter().chain(std::iter::once(&values.to_vec())) {
        if let Some(bad) = x.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Fit(format!("non-positive sample {bad}")));
        }
    }
    let logs: Vec<Vec<f64>> = predictors.iter().map(|x| x.iter().map(|v| v.ln()).collect()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    fit_log_linear_raw(&logs, &y)
}

fn fit_log_linear_raw(x: &[Vec<f64>], y: &[f64]) -> Result<LogLinearFit> {
    let n = y.len();
    let k = x.len();
    if x.iter().any(|col| col.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, found: x[0].len() });
    }
    if n <= k + 1 {
        return Err(Error::Fit(format!("{n} samples for {} coefficients", k + 1)));
    }
    let design = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { x[j - 1][i] });
    let rhs = DVector::from_column_slice(y);
    let normal = design.transpose() * &design;
    let cov = normal
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Fit("predictors are collinear".into()))?
        .inverse();
    let beta = &cov * design.transpose() * &rhs;
    let resid = &rhs - &design * &beta;
    let sigma2 = resid.norm_squared() / (n - k - 1) as f64;
    Ok(LogLinearFit {
        exponents: beta.iter().skip(1).copied().collect(),
        std_errors: (1..=k).map(|j| (sigma2 * cov[(j, j)]).sqrt()).collect(),
        intercept: beta[0],
    })
}

/// Pearson correlation coefficient.
pub fn correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Fit("correlation needs two equal-length series".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Golub-Welsch).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            let k = i.max(j) as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Energy-weighted dipole sum `(2m/hbar^2) sum_k |<n|x|k>|^2 (E_k - E_n)`,
/// equal to one for a single particle with a local potential in the continuum.
pub fn trk_sum_from(
    spectral: &SpectralData,
    position: &CMatrix,
    n: usize,
    mass: f64,
    hbar: f64,
    opts: &SpectralOptions,
) -> Result<f64> {
    spectral.require_gap(n, spectral.gap_tolerance(opts.gap_tol_rel))?;
    let ket = spectral.state(n);
    let x_ket = position * &ket;
    let mut sum = 0.0;
    for k in 0..spectral.dim() {
        if k != n {
            let elem = spectral.state(k).dotc(&x_ket);
            sum += elem.norm_sqr() * (spectral.energies[k] - spectral.energies[n]);
        }
    }
    Ok(2.0 * mass * sum / (hbar * hbar))
}

pub fn trk_sum(
    model: &MovingWellModel,
    point: &ParameterPoint,
    n: usize,
    opts: &SpectralOptions,
) -> Result<f64> {
    model.check_point(point)?;
    let spectral = eigensystem(&model.hamiltonian(point), point)?;
    trk_sum_from(&spectral, &model.position_operator(), n, model.mass(), model.hbar(), opts)
}

/// `|I_ind| / |I_prim|` in spectral norms; values well above one mark the
/// induced-dominated regime.
pub fn smallness_ratio(i_ind: &RMatrix, i_prim: &RMatrix) -> Result<f64> {
    let denom = linalg::spectral_norm_sym(i_prim);
    if denom == 0.0 {
        return Err(Error::InvalidParameter("primitive inertia is zero".into()));
    }
    Ok(linalg::spectral_norm_sym(i_ind) / denom)
}
