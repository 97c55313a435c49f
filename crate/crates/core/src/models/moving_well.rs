use serde::{Deserialize, Serialize};

use super::FastModel;
use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix, CVector};
use crate::spectral::{eigensystem, ParameterPoint, SpectralData};

/// Shape of the confining well `V(u)`, `u = x - X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WellProfile {
    /// `V = k u^2 / 2`
    Harmonic { k: f64 },
    /// `V = -depth * exp(-u^2 / (2 width^2))`
    Gaussian { depth: f64, width: f64 },
}

impl WellProfile {
    pub fn value(&self, u: f64) -> f64 {
        match *self {
            WellProfile::Harmonic { k } => 0.5 * k * u * u,
            WellProfile::Gaussian { depth, width } => -depth * (-u * u / (2.0 * width * width)).exp(),
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            WellProfile::Harmonic { k } => k * u,
            WellProfile::Gaussian { depth, width } => {
                depth * u / (width * width) * (-u * u / (2.0 * width * width)).exp()
            }
        }
    }
}

/// Finite-difference order of the kinetic operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stencil {
    ThreePoint,
    FivePoint,
}

/// One particle of mass `m_p` on a uniform 1D grid, bound to a well centred on
/// the slow coordinate `X`: `H = p^2 / 2 m_p + V(x - X)` with Dirichlet ends.
#[derive(Debug, Clone)]
pub struct MovingWellModel {
    mass: f64,
    spacing: f64,
    n_points: usize,
    well: WellProfile,
    stencil: Stencil,
    hbar: f64,
    kinetic: CMatrix,
}

/// Diagnostics of how well the grid resolves the bound ground state.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionReport {
    /// Grid points inside the full width at half maximum of `|psi_0|^2`.
    pub points_across_width: f64,
    /// `1 / sum |psi|^4`, in grid points.
    pub participation_ratio: f64,
    pub bound_states: usize,
    pub warnings: Vec<String>,
}

impl MovingWellModel {
    pub fn new(
        n_points: usize,
        spacing: f64,
        mass: f64,
        well: WellProfile,
        stencil: Stencil,
        hbar: f64,
    ) -> Result<Self> {
        if n_points < 5 {
            return Err(Error::InvalidParameter(format!("grid needs >= 5 points, got {n_points}")));
        }
        for (name, v) in [("spacing", spacing), ("mass", mass), ("hbar", hbar)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        match well {
            WellProfile::Harmonic { k } if !(k > 0.0) => {
                return Err(Error::InvalidParameter(format!("spring constant must be positive, got {k}")))
            }
            WellProfile::Gaussian { depth, width } if !(depth > 0.0 && width > 0.0) => {
                return Err(Error::InvalidParameter("gaussian well needs positive depth and width".into()))
            }
            _ => {}
        }
        let scale = hbar * hbar / (2.0 * mass * spacing * spacing);
        let coeffs: &[f64] = match stencil {
            Stencil::ThreePoint => &[2.0, -1.0],
            Stencil::FivePoint => &[30.0 / 12.0, -16.0 / 12.0, 1.0 / 12.0],
        };
        let mut kinetic = CMatrix::zeros(n_points, n_points);
        for i in 0..n_points {
            for (off, w) in coeffs.iter().enumerate() {
                if i + off < n_points {
                    kinetic[(i, i + off)] = c(scale * w);
                    kinetic[(i + off, i)] = c(scale * w);
                }
            }
        }
        Ok(Self { mass, spacing, n_points, well, stencil, hbar, kinetic })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn stencil(&self) -> Stencil {
        self.stencil
    }

    pub fn well(&self) -> &WellProfile {
        &self.well
    }

    /// Grid coordinates, symmetric about zero.
    pub fn grid(&self) -> Vec<f64> {
        let mid = (self.n_points as f64 - 1.0) / 2.0;
        (0..self.n_points).map(|j| (j as f64 - mid) * self.spacing).collect()
    }

    /// Half-length of the box.
    pub fn extent(&self) -> f64 {
        (self.n_points as f64 - 1.0) / 2.0 * self.spacing
    }

    pub fn position_operator(&self) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_iterator(self.n_points, self.grid().into_iter().map(c)))
    }

    /// Ground-state resolution check at `x` (validation warnings, not errors).
    pub fn resolution_report(&self, x: &ParameterPoint) -> Result<ResolutionReport> {
        let s: SpectralData = eigensystem(&self.hamiltonian(x), x)?;
        let psi = s.state(0);
        let dens: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
        let peak = dens.iter().cloned().fold(0.0, f64::max);
        let above = dens.iter().filter(|&&d| d >= peak / 2.0).count() as f64;
        let pr = 1.0 / dens.iter().map(|d| d * d).sum::<f64>();
        let bound_states = match self.well {
            WellProfile::Harmonic { .. } => s.dim(),
            WellProfile::Gaussian { .. } => s.energies.iter().filter(|&&e| e < 0.0).count(),
        };
        let mut warnings = Vec::new();
        if above < 15.0 {
            warnings.push(format!(
                "ground state spans only {above} grid points at half maximum (want >= 15)"
            ));
        }
        if pr > self.n_points as f64 / 4.0 {
            warnings.push(format!(
                "ground state is not localized: participation ratio {pr:.1} of {} points",
                self.n_points
            ));
        }
        if bound_states < 2 {
            warnings.push(format!("well supports {bound_states} bound state(s); need >= 2"));
        }
        for w in &warnings {
            log::warn!("moving well: {w}");
        }
        Ok(ResolutionReport { points_across_width: above, participation_ratio: pr, bound_states, warnings })
    }
}

impl FastModel for MovingWellModel {
    fn name(&self) -> &str {
        "moving-well"
    }

    fn dim(&self) -> usize {
        self.n_points
    }

    fn n_params(&self) -> usize {
        1
    }

    fn hbar(&self) -> f64 {
        self.hbar
    }

    fn hamiltonian(&self, x: &ParameterPoint) -> CMatrix {
        let centre = x.coords()[0];
        let mut h = self.kinetic.clone();
        for (j, xj) in self.grid().into_iter().enumerate() {
            h[(j, j)] += c(self.well.value(xj - centre));
        }
        h
    }

    /// `dH/dX = -V'(x - X)`, diagonal on the grid.
    fn gradient(&self, x: &ParameterPoint, _i: usize) -> CMatrix {
        let centre = x.coords()[0];
        CMatrix::from_diagonal(&CVector::from_iterator(
            self.n_points,
            self.grid().into_iter().map(|xj| c(-self.well.derivative(xj - centre))),
        ))
    }

    fn parameter_names(&self) -> Vec<String> {
        vec!["X".into()]
    }

    fn check_point(&self, x: &ParameterPoint) -> Result<()> {
        if x.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: x.dim() });
        }
        if x.coords()[0].abs() >= self.extent() {
            return Err(Error::InvalidParameter(format!(
                "well centre {} outside the grid [-{e}, {e}]",
                x.coords()[0],
                e = self.extent()
            )));
        }
        Ok(())
    }
}
