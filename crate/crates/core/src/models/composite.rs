use super::FastModel;
use crate::error::{Error, Result};
use crate::linalg::{kron, CMatrix};
use crate::spectral::ParameterPoint;
use std::sync::Arc;

/// X-independent Hamiltonian over `n_params` slow coordinates.
#[derive(Debug, Clone)]
pub struct StaticModel {
    h: CMatrix,
    n_params: usize,
    hbar: f64,
}

impl StaticModel {
    pub fn new(h: CMatrix, n_params: usize, hbar: f64) -> Result<Self> {
        if h.nrows() != h.ncols() {
            return Err(Error::DimensionMismatch { expected: h.nrows(), found: h.ncols() });
        }
        if n_params == 0 {
            return Err(Error::InvalidParameter("n_params must be at least 1".into()));
        }
        Ok(Self { h, n_params, hbar })
    }
}

impl FastModel for StaticModel {
    fn name(&self) -> &str {
        "static"
    }
    fn dim(&self) -> usize {
        self.h.nrows()
    }
    fn n_params(&self) -> usize {
        self.n_params
    }
    fn hbar(&self) -> f64 {
        self.hbar
    }
    fn hamiltonian(&self, _x: &ParameterPoint) -> CMatrix {
        self.h.clone()
    }
    fn gradient(&self, _x: &ParameterPoint, _i: usize) -> CMatrix {
        CMatrix::zeros(self.h.nrows(), self.h.ncols())
    }
}

/// Two independent fast subsystems driven by the same slow coordinates:
/// `H = H_a (x) 1 + 1 (x) H_b`.
#[derive(Clone)]
pub struct TensorSumModel {
    a: Arc<dyn FastModel>,
    b: Arc<dyn FastModel>,
}

impl TensorSumModel {
    pub fn new(a: Arc<dyn FastModel>, b: Arc<dyn FastModel>) -> Result<Self> {
        if a.n_params() != b.n_params() {
            return Err(Error::DimensionMismatch { expected: a.n_params(), found: b.n_params() });
        }
        if (a.hbar() - b.hbar()).abs() > 0.0 {
            return Err(Error::InvalidParameter("subsystems use different hbar".into()));
        }
        Ok(Self { a, b })
    }

    fn combine(&self, ha: CMatrix, hb: CMatrix) -> CMatrix {
        let ia = CMatrix::identity(self.a.dim(), self.a.dim());
        let ib = CMatrix::identity(self.b.dim(), self.b.dim());
        kron(&ha, &ib) + kron(&ia, &hb)
    }
}

impl FastModel for TensorSumModel {
    fn name(&self) -> &str {
        "tensor-sum"
    }
    fn dim(&self) -> usize {
        self.a.dim() * self.b.dim()
    }
    fn n_params(&self) -> usize {
        self.a.n_params()
    }
    fn hbar(&self) -> f64 {
        self.a.hbar()
    }
    fn hamiltonian(&self, x: &ParameterPoint) -> CMatrix {
        self.combine(self.a.hamiltonian(x), self.b.hamiltonian(x))
    }
    fn gradient(&self, x: &ParameterPoint, i: usize) -> CMatrix {
        self.combine(self.a.gradient(x, i), self.b.gradient(x, i))
    }
    fn check_point(&self, x: &ParameterPoint) -> Result<()> {
        self.a.check_point(x)?;
        self.b.check_point(x)
    }
}
