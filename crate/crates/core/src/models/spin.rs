use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{AnalyticReference, FastModel};
use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix, I};
use crate::spectral::ParameterPoint;

/// Dimensionless spin matrices `(J_x, J_y, J_z)` for spin `twice_s / 2`,
/// basis ordered by projection `m = s, s-1, ..., -s`.
pub fn spin_matrices(twice_s: u32) -> [CMatrix; 3] {
    let dim = twice_s as usize + 1;
    let s = twice_s as f64 / 2.0;
    let m_of = |k: usize| s - k as f64;
    let mut jz = CMatrix::zeros(dim, dim);
    let mut jp = CMatrix::zeros(dim, dim);
    for k in 0..dim {
        jz[(k, k)] = c(m_of(k));
        if k > 0 {
            // J+ |m> = sqrt(s(s+1) - m(m+1)) |m+1>; |m+1> sits at index k-1
            let m = m_of(k);
            jp[(k - 1, k)] = c((s * (s + 1.0) - m * (m + 1.0)).sqrt());
        }
    }
    let jm = jp.adjoint();
    let jx = (&jp + &jm) * c(0.5);
    let jy = (&jp - &jm) * (-I * 0.5);
    [jx, jy, jz]
}

/// How the field `b(X) = gB(X) * B_hat(X)` depends on the slow coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpinProfile {
    /// `X = (theta, phi)`: direction on the unit sphere, constant strength `gb`.
    Sphere { gb: f64 },
    /// Direction rotates in the x-z plane by angle `sum_i rates[i] X_i`, constant strength.
    PlanarRotation { gb: f64, rates: Vec<f64> },
    /// `b(X) = offset + sum_i X_i jacobian[i]`.
    Linear {
        offset: [f64; 3],
        jacobian: Vec<[f64; 3]>,
    },
}

/// Spin in a slowly varying magnetic field, `H = -b(X) . J`, so the level with
/// projection `m` along the field has energy `-|b| m`.
///
/// The spin operators carrying units of action are `S = hbar J`.
#[derive(Debug, Clone)]
pub struct SpinFieldModel {
    twice_s: u32,
    hbar: f64,
    profile: SpinProfile,
    ops: [CMatrix; 3],
}

impl SpinFieldModel {
    pub fn new(twice_s: u32, profile: SpinProfile, hbar: f64) -> Result<Self> {
        if twice_s == 0 {
            return Err(Error::InvalidParameter(
                "spin must be one of 1/2, 1, 3/2, ...".into(),
            ));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidParameter(format!("hbar must be positive, got {hbar}")));
        }
        match &profile {
            SpinProfile::Sphere { gb } | SpinProfile::PlanarRotation { gb, .. } => {
                if !(*gb > 0.0 && gb.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "field strength gB must be positive, got {gb}"
                    )));
                }
            }
            SpinProfile::Linear { jacobian, .. } => {
                if jacobian.is_empty() {
                    return Err(Error::InvalidParameter(
                        "linear field profile needs at least one slow coordinate".into(),
                    ));
                }
            }
        }
        if let SpinProfile::PlanarRotation { rates, .. } = &profile {
            if rates.is_empty() {
                return Err(Error::InvalidParameter(
                    "planar rotation needs at least one rate".into(),
                ));
            }
        }
        Ok(Self {
            twice_s,
            hbar,
            profile,
            ops: spin_matrices(twice_s),
        })
    }

    pub fn spin(&self) -> f64 {
        self.twice_s as f64 / 2.0
    }

    pub fn profile(&self) -> &SpinProfile {
        &self.profile
    }

    /// Spin operators in units of action, `S = hbar J`.
    pub fn spin_operators(&self) -> [CMatrix; 3] {
        let h = c(self.hbar);
        [&self.ops[0] * h, &self.ops[1] * h, &self.ops[2] * h]
    }

    /// Level index (ascending energy) of projection `m`; the aligned state `m = s` is the ground level.
    pub fn level_of_projection(&self, m: f64) -> Result<usize> {
        let s = self.spin();
        let k = s - m;
        if k < -1e-9 || k > 2.0 * s + 1e-9 || (k - k.round()).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "projection {m} not allowed for spin {s}"
            )));
        }
        Ok(k.round() as usize)
    }

    pub fn projection_of_level(&self, level: usize) -> f64 {
        self.spin() - level as f64
    }

    pub fn field(&self, x: &ParameterPoint) -> [f64; 3] {
        let p = x.coords();
        match &self.profile {
            SpinProfile::Sphere { gb } => {
                let (th, ph) = (p[0], p[1]);
                [gb * th.sin() * ph.cos(), gb * th.sin() * ph.sin(), gb * th.cos()]
            }
            SpinProfile::PlanarRotation { gb, rates } => {
                let a: f64 = rates.iter().zip(p).map(|(r, x)| r * x).sum();
                [gb * a.sin(), 0.0, gb * a.cos()]
            }
            SpinProfile::Linear { offset, jacobian } => {
                let mut b = *offset;
                for (row, xi) in jacobian.iter().zip(p) {
                    for k in 0..3 {
                        b[k] += xi * row[k];
                    }
                }
                b
            }
        }
    }

    pub fn field_gradient(&self, x: &ParameterPoint, i: usize) -> [f64; 3] {
        let p = x.coords();
        match &self.profile {
            SpinProfile::Sphere { gb } => {
                let (th, ph) = (p[0], p[1]);
                if i == 0 {
                    [gb * th.cos() * ph.cos(), gb * th.cos() * ph.sin(), -gb * th.sin()]
                } else {
                    [-gb * th.sin() * ph.sin(), gb * th.sin() * ph.cos(), 0.0]
                }
            }
            SpinProfile::PlanarRotation { gb, rates } => {
                let a: f64 = rates.iter().zip(p).map(|(r, x)| r * x).sum();
                [gb * rates[i] * a.cos(), 0.0, -gb * rates[i] * a.sin()]
            }
            SpinProfile::Linear { jacobian, .. } => jacobian[i],
        }
    }

    fn contract(&self, b: [f64; 3]) -> CMatrix {
        (&self.ops[0] * c(-b[0])) + (&self.ops[1] * c(-b[1])) + (&self.ops[2] * c(-b[2]))
    }
}

impl FastModel for SpinFieldModel {
    fn name(&self) -> &str {
        "spin"
    }

    fn dim(&self) -> usize {
        self.twice_s as usize + 1
    }

    fn n_params(&self) -> usize {
        match &self.profile {
            SpinProfile::Sphere { .. } => 2,
            SpinProfile::PlanarRotation { rates, .. } => rates.len(),
            SpinProfile::Linear { jacobian, .. } => jacobian.len(),
        }
    }

    fn hbar(&self) -> f64 {
        self.hbar
    }

    fn hamiltonian(&self, x: &ParameterPoint) -> CMatrix {
        self.contract(self.field(x))
    }

    fn gradient(&self, x: &ParameterPoint, i: usize) -> CMatrix {
        self.contract(self.field_gradient(x, i))
    }

    fn parameter_names(&self) -> Vec<String> {
        match &self.profile {
            SpinProfile::Sphere { .. } => vec!["theta".into(), "phi".into()],
            _ => (0..self.n_params()).map(|i| format!("x{i}")).collect(),
        }
    }

    fn check_point(&self, x: &ParameterPoint) -> Result<()> {
        if x.dim() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                found: x.dim(),
            });
        }
        let b = self.field(x);
        if (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt() < 1e-300 {
            return Err(Error::VanishingField(x.coords().to_vec()));
        }
        Ok(())
    }

    /// Closed forms for a rotating field of fixed strength.  For level `m`
    /// (projection along the field) and direction derivative `d_i B_hat`:
    ///
    /// * `I_ij = hbar^2 m (d_i B_hat . d_j B_hat) / gB`
    /// * `g_ij = (s(s+1) - m^2) (d_i B_hat . d_j B_hat) / 2`
    /// * sphere: `F_theta_phi = -hbar m sin(theta)`
    fn analytic_reference(&self, x: &ParameterPoint, level: usize) -> Option<AnalyticReference> {
        let s = self.spin();
        let m = self.projection_of_level(level);
        let d = self.n_params();
        let perp = s * (s + 1.0) - m * m;
        match &self.profile {
            SpinProfile::PlanarRotation { gb, rates } => {
                let outer = DMatrix::from_fn(d, d, |i, j| rates[i] * rates[j]);
                Some(AnalyticReference {
                    metric: Some(&outer * (perp / 2.0)),
                    curvature: Some(DMatrix::zeros(d, d)),
                    induced_inertia: Some(&outer * (self.hbar * self.hbar * m / gb)),
                })
            }
            SpinProfile::Sphere { gb } => {
                let th = x.coords()[0];
                let outer = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, th.sin().powi(2)]);
                let f = -self.hbar * m * th.sin();
                Some(AnalyticReference {
                    metric: Some(&outer * (perp / 2.0)),
                    curvature: Some(DMatrix::from_row_slice(2, 2, &[0.0, f, -f, 0.0])),
                    induced_inertia: Some(&outer * (self.hbar * self.hbar * m / gb)),
                })
            }
            SpinProfile::Linear { .. } => None,
        }
    }
}
