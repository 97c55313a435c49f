//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;
pub type RMatrix = DMatrix<f64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Relative Frobenius norm of the anti-Hermitian part, `|H - H^dagger| / |H|`.
/// Falls back to the absolute norm for the zero matrix.
pub fn hermiticity_defect(h: &CMatrix) -> f64 {
    let diff = frobenius(&(h - h.adjoint()));
    let scale = frobenius(h);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

pub fn is_real(h: &CMatrix) -> bool {
    h.iter().all(|z| z.im == 0.0)
}

pub fn to_complex(m: &RMatrix) -> CMatrix {
    m.map(c)
}

/// `<a|M|b>`
pub fn sandwich(a: &CVector, m: &CMatrix, b: &CVector) -> Complex64 {
    a.dotc(&(m * b))
}

/// Kronecker product `a (x) b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Cholesky-based inverse of a real symmetric positive definite matrix.
pub fn spd_inverse(m: &RMatrix, what: &'static str) -> Result<RMatrix> {
    if !m.iter().all(|x| x.is_finite()) {
        return Err(Error::NotPositiveDefinite { what });
    }
    let sym = symmetrize(m);
    let chol = nalgebra::Cholesky::new(sym).ok_or(Error::NotPositiveDefinite { what })?;
    Ok(chol.inverse())
}

pub fn is_positive_definite(m: &RMatrix) -> bool {
    nalgebra::Cholesky::new(symmetrize(m)).is_some()
}

pub fn symmetrize(m: &RMatrix) -> RMatrix {
    (m + m.transpose()) * 0.5
}

/// Largest absolute eigenvalue of a real symmetric matrix.
pub fn spectral_norm_sym(m: &RMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let e = nalgebra::SymmetricEigen::new(symmetrize(m));
    e.eigenvalues.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn min_eigenvalue_sym(m: &RMatrix) -> f64 {
    let e = nalgebra::SymmetricEigen::new(symmetrize(m));
    e.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// `exp(-i H t / hbar)` for Hermitian `H`, through its eigendecomposition.
pub fn unitary_propagator(h: &CMatrix, t: f64, hbar: f64) -> CMatrix {
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    let phases = eig
        .eigenvalues
        .map(|e| Complex64::from_polar(1.0, -e * t / hbar));
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    scaled * v.adjoint()
}
