use nalgebra::DMatrix;

use super::{AnalyticReference, FastModel};
use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix, I};
use crate::spectral::ParameterPoint;

/// `H = d(X) . sigma` with `d(X) = offset + sum_i X_i jacobian[i]`.
///
/// Levels are `-|d|` (index 0) and `+|d|` (index 1); they cross where `d` vanishes.
#[derive(Debug, Clone)]
pub struct TwoLevelModel {
    offset: [f64; 3],
    jacobian: Vec<[f64; 3]>,
    hbar: f64,
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

impl TwoLevelModel {
    pub fn new(offset: [f64; 3], jacobian: Vec<[f64; 3]>, hbar: f64) -> Result<Self> {
        if jacobian.is_empty() {
            return Err(Error::InvalidParameter(
                "two-level model needs at least one slow coordinate".into(),
            ));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidParameter(format!("hbar must be positive, got {hbar}")));
        }
        Ok(Self { offset, jacobian, hbar })
    }

    /// `d = (x, y, z)`: conical intersection at the origin of a 3D parameter space.
    pub fn conical(hbar: f64) -> Self {
        Self::new(
            [0.0; 3],
            vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            hbar,
        )
        .expect("valid")
    }

    /// `d = (delta, 0, x)`: avoided crossing of minimum gap `2 delta`.
    pub fn avoided_crossing(delta: f64, hbar: f64) -> Self {
        Self::new([delta, 0.0, 0.0], vec![[0.0, 0.0, 1.0]], hbar).expect("valid")
    }

    pub fn d(&self, x: &ParameterPoint) -> [f64; 3] {
        let mut d = self.offset;
        for (row, xi) in self.jacobian.iter().zip(x.coords()) {
            for k in 0..3 {
                d[k] += xi * row[k];
            }
        }
        d
    }

    fn sigma_dot(v: [f64; 3]) -> CMatrix {
        CMatrix::from_row_slice(
            2,
            2,
            &[c(v[2]), c(v[0]) - I * v[1], c(v[0]) + I * v[1], c(-v[2])],
        )
    }
}

impl FastModel for TwoLevelModel {
    fn name(&self) -> &str {
        "two-level"
    }

    fn dim(&self) -> usize {
        2
    }

    fn n_params(&self) -> usize {
        self.jacobian.len()
    }

    fn hbar(&self) -> f64 {
        self.hbar
    }

    fn hamiltonian(&self, x: &ParameterPoint) -> CMatrix {
        Self::sigma_dot(self.d(x))
    }

    fn gradient(&self, _x: &ParameterPoint, i: usize) -> CMatrix {
        Self::sigma_dot(self.jacobian[i])
    }

    /// With `r = |d|`, `u = d/r` and `p_i` the part of `d_i d` perpendicular to `u`:
    ///
    /// * `g_ij = p_i . p_j / (4 r^2)`
    /// * `I_ij = +-hbar^2 p_i . p_j / (4 r^3)` (+ for the lower level)
    /// * `F_ij = +-(hbar / 2) u . (d_i u x d_j u)`
    fn analytic_reference(&self, x: &ParameterPoint, level: usize) -> Option<AnalyticReference> {
        let d = self.d(x);
        let r = dot(d, d).sqrt();
        if r == 0.0 || level > 1 {
            return None;
        }
        let u = [d[0] / r, d[1] / r, d[2] / r];
        let perp: Vec<[f64; 3]> = self
            .jacobian
            .iter()
            .map(|g| {
                let along = dot(*g, u);
                [g[0] - along * u[0], g[1] - along * u[1], g[2] - along * u[2]]
            })
            .collect();
        let du: Vec<[f64; 3]> = perp.iter().map(|p| [p[0] / r, p[1] / r, p[2] / r]).collect();
        let n = self.jacobian.len();
        let sign = if level == 0 { 1.0 } else { -1.0 };
        let pp = DMatrix::from_fn(n, n, |i, j| dot(perp[i], perp[j]));
        Some(AnalyticReference {
            metric: Some(&pp / (4.0 * r * r)),
            induced_inertia: Some(&pp * (sign * self.hbar * self.hbar / (4.0 * r.powi(3)))),
            curvature: Some(DMatrix::from_fn(n, n, |i, j| {
                sign * self.hbar / 2.0 * dot(u, cross(du[i], du[j]))
            })),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::assert_gradient_consistent;
    use crate::spectral::eigensystem;

    #[test]
    fn z_only_crossing() {
        let m = TwoLevelModel::new([0.0; 3], vec![[0.0, 0.0, 1.0]], 1.0).unwrap();
        for z in [-2.0, 0.5, 3.0] {
            let p = ParameterPoint::from(z);
            let s = eigensystem(&m.hamiltonian(&p), &p).unwrap();
            assert!((s.energies[0] + f64::abs(z)).abs() < 1e-14);
            assert!((s.energies[1] - f64::abs(z)).abs() < 1e-14);
        }
        let p = ParameterPoint::from(0.0);
        let s = eigensystem(&m.hamiltonian(&p), &p).unwrap();
        assert!(s.require_gap(0, s.gap_tolerance(1e-8)).is_err());
    }

    #[test]
    fn gap_is_twice_norm() {
        let m = TwoLevelModel::conical(1.0);
        let p = ParameterPoint::new(vec![0.3, -0.4, 1.2]).unwrap();
        let s = eigensystem(&m.hamiltonian(&p), &p).unwrap();
        assert!((s.spectral_range() - 2.0 * 1.3).abs() < 1e-13);
    }

    #[test]
    fn gradient_consistency() {
        let m = TwoLevelModel::new([0.2, 0.0, 0.1], vec![[1.0, 0.5, 0.0], [0.0, 1.0, 2.0]], 1.0).unwrap();
        for k in 0..20 {
            let t = k as f64 * 0.37;
            let p = ParameterPoint::new(vec![t.sin(), t.cos() * 2.0]).unwrap();
            assert_gradient_consistent(&m, &p);
        }
    }
}
