//! Fast-system models: parameterized Hermitian Hamiltonians `H(X)` together
//! with their exact parameter gradients.

mod composite;
mod cranked;
mod moving_well;
mod random;
mod spin;
mod two_level;

pub use composite::{StaticModel, TensorSumModel};
pub use cranked::{self_consistent_omega_x, CrankedOscillatorModel};
pub use moving_well::{MovingWellModel, ResolutionReport, Stencil, WellProfile};
pub use random::RandomHermitianModel;
pub use spin::{spin_matrices, SpinFieldModel, SpinProfile};
pub use two_level::TwoLevelModel;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::spectral::ParameterPoint;

/// Closed-form values a model can supply for regression tests.
#[derive(Debug, Clone, Default)]
pub struct AnalyticReference {
    pub metric: Option<DMatrix<f64>>,
    pub curvature: Option<DMatrix<f64>>,
    pub induced_inertia: Option<DMatrix<f64>>,
}

pub trait FastModel: Send + Sync {
    fn name(&self) -> &str;

    /// Hilbert-space dimension N.
    fn dim(&self) -> usize;

    /// Number of slow coordinates D.
    fn n_params(&self) -> usize;

    fn hbar(&self) -> f64 {
        1.0
    }

    fn hamiltonian(&self, x: &ParameterPoint) -> CMatrix;

    /// `dH/dX_i`
    fn gradient(&self, x: &ParameterPoint, i: usize) -> CMatrix;

    fn gradients(&self, x: &ParameterPoint) -> Vec<CMatrix> {
        (0..self.n_params()).map(|i| self.gradient(x, i)).collect()
    }

    fn parameter_names(&self) -> Vec<String> {
        (0..self.n_params()).map(|i| format!("x{i}")).collect()
    }

    /// Validates that `x` is a legal query point.
    fn check_point(&self, x: &ParameterPoint) -> Result<()> {
        if x.dim() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                found: x.dim(),
            });
        }
        Ok(())
    }

    fn analytic_reference(&self, _x: &ParameterPoint, _level: usize) -> Option<AnalyticReference> {
        None
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::linalg::frobenius;

    /// Max over coordinates of |dH/dX_i - central difference| / |dH/dX_i| (absolute if the gradient vanishes).
    pub fn gradient_defect(model: &dyn FastModel, x: &ParameterPoint, h: f64) -> f64 {
        (0..model.n_params())
            .map(|i| {
                let fd = (model.hamiltonian(&x.shifted(i, h)) - model.hamiltonian(&x.shifted(i, -h)))
                    / crate::linalg::c(2.0 * h);
                let g = model.gradient(x, i);
                let scale = frobenius(&g).max(1.0);
                frobenius(&(fd - g)) / scale
            })
            .fold(0.0, f64::max)
    }

    /// Checks O(h^2) agreement of the analytic gradient with central differences.
    pub fn assert_gradient_consistent(model: &dyn FastModel, x: &ParameterPoint) {
        let coarse = gradient_defect(model, x, 1e-3);
        let fine = gradient_defect(model, x, 5e-4);
        assert!(coarse < 1e-4, "{}: gradient defect {coarse:e}", model.name());
        // second order: halving h quarters the error, unless both sit at rounding level
        assert!(
            fine < coarse / 3.0 || coarse < 1e-9,
            "{}: defect {coarse:e} -> {fine:e} not second order",
            model.name()
        );
    }
}
