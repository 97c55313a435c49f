use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::FastModel;
use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix};
use crate::spectral::ParameterPoint;

/// `H(X) = H_0 + sum_i X_i H_i` with independent GUE draws, reproducible from a seed.
#[derive(Debug, Clone)]
pub struct RandomHermitianModel {
    base: CMatrix,
    slopes: Vec<CMatrix>,
    hbar: f64,
    seed: u64,
}

fn gue(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let mut h = CMatrix::zeros(n, n);
    let half = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        let d: f64 = StandardNormal.sample(rng);
        h[(i, i)] = c(d);
        for j in 0..i {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let z = Complex64::new(re * half, im * half);
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    h
}

impl RandomHermitianModel {
    pub fn new(dim: usize, n_params: usize, seed: u64, hbar: f64) -> Result<Self> {
        if dim < 2 || n_params == 0 {
            return Err(Error::InvalidParameter(format!(
                "random model needs dim >= 2 and n_params >= 1, got {dim}, {n_params}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = gue(dim, &mut rng);
        let slopes = (0..n_params).map(|_| gue(dim, &mut rng)).collect();
        Ok(Self { base, slopes, hbar, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl FastModel for RandomHermitianModel {
    fn name(&self) -> &str {
        "random-hermitian"
    }
    fn dim(&self) -> usize {
        self.base.nrows()
    }
    fn n_params(&self) -> usize {
        self.slopes.len()
    }
    fn hbar(&self) -> f64 {
        self.hbar
    }
    fn hamiltonian(&self, x: &ParameterPoint) -> CMatrix {
        let mut h = self.base.clone();
        for (s, xi) in self.slopes.iter().zip(x.coords()) {
            h += s * c(*xi);
        }
        h
    }
    fn gradient(&self, _x: &ParameterPoint, i: usize) -> CMatrix {
        self.slopes[i].clone()
    }
}
