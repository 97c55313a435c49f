use num_complex::Complex64;

use super::FastModel;
use crate::error::{Error, Result};
use crate::geometry::particle_hole_inertia;
use crate::linalg::{c, CMatrix, I};
use crate::spectral::{eigensystem, ParameterPoint, SpectralOptions};

/// 2D anisotropic oscillator in the x-z plane whose symmetry axis is rotated
/// about y by the slow angle `theta`, filled with `n_occupied` independent
/// fermions (one per orbital).
///
/// `H(theta) = U H_0 U^dagger`, `U = exp(-i theta L_y / hbar)`, in the basis of
/// oscillator states `|n_x, n_z>` with `n_x + n_z <= n_shells`.  `L_y` is built
/// from exact ladder-operator matrix elements, so `dH/dtheta = -(i/hbar)[L_y, H]`
/// holds exactly in the truncated space.
#[derive(Debug, Clone)]
pub struct CrankedOscillatorModel {
    omega_x: f64,
    omega_z: f64,
    mass: f64,
    hbar: f64,
    n_occupied: usize,
    quanta: Vec<(usize, usize)>,
    h0: CMatrix,
    ly: CMatrix,
    ly_values: Vec<f64>,
    ly_vectors: CMatrix,
    r2: CMatrix,
}

/// 1D oscillator matrix elements of `(a + a^dagger)` and `i (a^dagger - a)`.
fn ladder_x(n_out: usize, n_in: usize) -> f64 {
    if n_out == n_in + 1 {
        ((n_in + 1) as f64).sqrt()
    } else if n_in == n_out + 1 {
        (n_in as f64).sqrt()
    } else {
        0.0
    }
}

fn ladder_p(n_out: usize, n_in: usize) -> Complex64 {
    if n_out == n_in + 1 {
        I * ((n_in + 1) as f64).sqrt()
    } else if n_in == n_out + 1 {
        -I * (n_in as f64).sqrt()
    } else {
        c(0.0)
    }
}

/// `<n_out|(a + a^dagger)^2|n_in>`
fn ladder_x2(n_out: usize, n_in: usize) -> f64 {
    let n = n_in as f64;
    if n_out == n_in {
        2.0 * n + 1.0
    } else if n_out == n_in + 2 {
        ((n + 1.0) * (n + 2.0)).sqrt()
    } else if n_in == n_out + 2 {
        (n * (n - 1.0)).sqrt()
    } else {
        0.0
    }
}

impl CrankedOscillatorModel {
    pub fn new(
        omega_x: f64,
        omega_z: f64,
        mass: f64,
        hbar: f64,
        n_occupied: usize,
        n_shells: usize,
    ) -> Result<Self> {
        for (name, v) in [("omega_x", omega_x), ("omega_z", omega_z), ("mass", mass), ("hbar", hbar)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        let quanta: Vec<(usize, usize)> = (0..=n_shells)
            .flat_map(|shell| (0..=shell).map(move |nx| (nx, shell - nx)))
            .collect();
        let dim = quanta.len();
        if n_occupied == 0 || n_occupied >= dim {
            return Err(Error::InvalidParameter(format!(
                "need 0 < occupied orbitals ({n_occupied}) < basis size ({dim})"
            )));
        }
        let lx = (hbar / (2.0 * mass * omega_x)).sqrt();
        let lz = (hbar / (2.0 * mass * omega_z)).sqrt();
        let px = (hbar * mass * omega_x / 2.0).sqrt();
        let pz = (hbar * mass * omega_z / 2.0).sqrt();

        let mut h0 = CMatrix::zeros(dim, dim);
        let mut ly = CMatrix::zeros(dim, dim);
        let mut r2 = CMatrix::zeros(dim, dim);
        for (a, &(ax, az)) in quanta.iter().enumerate() {
            h0[(a, a)] = c(hbar * omega_x * (ax as f64 + 0.5) + hbar * omega_z * (az as f64 + 0.5));
            for (b, &(bx, bz)) in quanta.iter().enumerate() {
                // L_y = z p_x - x p_z
                let zpx = c(lz * ladder_x(az, bz)) * (ladder_p(ax, bx) * px);
                let xpz = c(lx * ladder_x(ax, bx)) * (ladder_p(az, bz) * pz);
                ly[(a, b)] = zpx - xpz;
                let mut rr = 0.0;
                if az == bz {
                    rr += lx * lx * ladder_x2(ax, bx);
                }
                if ax == bx {
                    rr += lz * lz * ladder_x2(az, bz);
                }
                r2[(a, b)] = c(rr);
            }
        }
        let eig = nalgebra::SymmetricEigen::new(ly.clone());
        let ly_values = eig.eigenvalues.iter().copied().collect();
        Ok(Self {
            omega_x,
            omega_z,
            mass,
            hbar,
            n_occupied,
            quanta,
            h0,
            ly,
            ly_values,
            ly_vectors: eig.eigenvectors,
            r2,
        })
    }

    pub fn omega_x(&self) -> f64 {
        self.omega_x
    }

    pub fn omega_z(&self) -> f64 {
        self.omega_z
    }

    pub fn n_occupied(&self) -> usize {
        self.n_occupied
    }

    pub fn angular_momentum(&self) -> &CMatrix {
        &self.ly
    }

    fn rotation(&self, theta: f64) -> CMatrix {
        let mut scaled = self.ly_vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= Complex64::from_polar(1.0, -theta * self.ly_values[j] / self.hbar);
        }
        scaled * self.ly_vectors.adjoint()
    }

    /// Inglis moment of inertia: the induced inertia of the filled orbitals,
    /// summed over particle-hole excitations.
    ///
    /// The angle is treated as an independent coordinate; no correction for its
    /// redundancy with the particle coordinates is applied.
    pub fn inglis_inertia(&self, theta: f64, opts: &SpectralOptions) -> Result<f64> {
        let p = ParameterPoint::from(theta);
        let s = eigensystem(&self.hamiltonian(&p), &p)?;
        let i = particle_hole_inertia(&s, &self.gradients(&p), self.n_occupied, self.hbar, opts)?;
        Ok(i[(0, 0)])
    }

    /// Rigid-body moment about y: `m * sum_occ <x^2 + z^2>`.
    pub fn rigid_inertia(&self, theta: f64) -> Result<f64> {
        let p = ParameterPoint::from(theta);
        let s = eigensystem(&self.hamiltonian(&p), &p)?;
        // x^2 + z^2 is invariant under rotations about y; evaluate in the body frame
        let u = self.rotation(theta);
        let mut total = 0.0;
        for n in 0..self.n_occupied {
            let body = u.adjoint() * s.state(n);
            total += body.dotc(&(&self.r2 * &body)).re;
        }
        Ok(self.mass * total)
    }

    /// `(sum_occ (n_x + 1/2), sum_occ (n_z + 1/2))` of the unrotated filling.
    pub fn quanta_sums(&self) -> Result<(f64, f64)> {
        occupied_quanta_sums(&self.quanta, &self.h0, self.n_occupied)
    }
}

fn occupied_quanta_sums(quanta: &[(usize, usize)], h0: &CMatrix, n_occ: usize) -> Result<(f64, f64)> {
    let mut order: Vec<usize> = (0..quanta.len()).collect();
    order.sort_by(|&a, &b| h0[(a, a)].re.total_cmp(&h0[(b, b)].re));
    let e_last = h0[(order[n_occ - 1], order[n_occ - 1])].re;
    let e_next = h0[(order[n_occ], order[n_occ])].re;
    if (e_next - e_last).abs() <= 1e-9 * e_next.abs() {
        return Err(Error::OpenShell { last_occupied: n_occ - 1, first_empty: n_occ });
    }
    let sx = order[..n_occ].iter().map(|&k| quanta[k].0 as f64 + 0.5).sum();
    let sz = order[..n_occ].iter().map(|&k| quanta[k].1 as f64 + 0.5).sum();
    Ok((sx, sz))
}

/// Solves the self-consistent deformation condition
/// `omega_x^2 <sum x^2> = omega_z^2 <sum z^2>`, i.e. `omega_x sum_x = omega_z sum_z`,
/// by fixed-point iteration on the frequency ratio starting from `start_ratio`.
/// Returns `omega_x` for the given `omega_z`.
pub fn self_consistent_omega_x(
    n_occupied: usize,
    omega_z: f64,
    n_shells: usize,
    start_ratio: f64,
) -> Result<f64> {
    let mut ratio = start_ratio;
    for _ in 0..200 {
        let model = CrankedOscillatorModel::new(ratio * omega_z, omega_z, 1.0, 1.0, n_occupied, n_shells)?;
        let (sx, sz) = model.quanta_sums()?;
        let next = sz / sx;
        if (next - ratio).abs() <= 1e-13 * ratio {
            return Ok(next * omega_z);
        }
        ratio = next;
    }
    Err(Error::InvalidParameter(format!(
        "self-consistent deformation did not converge for {n_occupied} orbitals"
    )))
}

impl FastModel for CrankedOscillatorModel {
    fn name(&self) -> &str {
        "cranked-oscillator"
    }

    fn dim(&self) -> usize {
        self.quanta.len()
    }

    fn n_params(&self) -> usize {
        1
    }

    fn hbar(&self) -> f64 {
        self.hbar
    }

    fn hamiltonian(&self, x: &ParameterPoint) -> CMatrix {
        let u = self.rotation(x.coords()[0]);
        let h = &u * &self.h0 * u.adjoint();
        (&h + h.adjoint()) * c(0.5)
    }

    fn gradient(&self, x: &ParameterPoint, _i: usize) -> CMatrix {
        let h = self.hamiltonian(x);
        (&self.ly * &h - &h * &self.ly) * (-I / self.hbar)
    }

    fn parameter_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }
}

impl CrankedOscillatorModel {
    /// Body-frame quadrupole-like moments `(m sum <x^2>, m sum <z^2>)` of the filling.
    pub fn second_moments(&self) -> Result<(f64, f64)> {
        let (sx, sz) = self.quanta_sums()?;
        Ok((
            self.hbar / (self.omega_x) * sx,
            self.hbar / (self.omega_z) * sz,
        ))
    }

    pub fn basis(&self) -> &[(usize, usize)] {
        &self.quanta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::assert_gradient_consistent;

    #[test]
    fn spectrum_is_rotation_invariant() {
        let m = CrankedOscillatorModel::new(2.0, 1.0, 1.0, 1.0, 2, 6).unwrap();
        let e = |t: f64| eigensystem(&m.hamiltonian(&ParameterPoint::from(t)), &ParameterPoint::from(t)).unwrap().energies;
        let (a, b) = (e(0.0), e(0.9));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let m = CrankedOscillatorModel::new(1.7, 1.0, 1.3, 1.0, 3, 5).unwrap();
        for t in [0.0, 0.3, 1.2] {
            assert_gradient_consistent(&m, &ParameterPoint::from(t));
        }
    }

    #[test]
    fn single_orbital_closed_form() {
        // one transition |0,0> -> |1,1>: hbar (wx - wz)^2 / (2 wx wz (wx + wz))
        let opts = SpectralOptions::default();
        for (wx, wz) in [(2.0, 1.0), (1.3, 0.8), (0.5, 1.5)] {
            let m = CrankedOscillatorModel::new(wx, wz, 1.0, 1.0, 1, 4).unwrap();
            let expected = (wx - wz) * (wx - wz) / (2.0 * wx * wz * (wx + wz));
            let got = m.inglis_inertia(0.4, &opts).unwrap();
            assert!((got - expected).abs() < 1e-12 * expected.max(1.0), "{got} vs {expected}");
        }
    }

    #[test]
    fn basis_doubling_does_not_change_inertia() {
        let opts = SpectralOptions::default();
        let small = CrankedOscillatorModel::new(3.0, 1.0, 1.0, 1.0, 3, 6).unwrap();
        let large = CrankedOscillatorModel::new(3.0, 1.0, 1.0, 1.0, 3, 12).unwrap();
        let (a, b) = (small.inglis_inertia(0.0, &opts).unwrap(), large.inglis_inertia(0.0, &opts).unwrap());
        assert!(((a - b) / b).abs() < 1e-3);
    }

    #[test]
    fn self_consistency_fixed_points() {
        for k in 2..=4 {
            let wx = self_consistent_omega_x(k, 1.0, 10, k as f64 + 0.3).unwrap();
            assert!((wx - k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn open_shell_detected() {
        // spherical, 2 particles: the n = 1 shell is half filled
        let m = CrankedOscillatorModel::new(1.0, 1.0, 1.0, 1.0, 2, 5).unwrap();
        assert!(matches!(m.quanta_sums(), Err(Error::OpenShell { .. })));
    }
}
