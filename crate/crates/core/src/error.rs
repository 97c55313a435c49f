use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian: relative Frobenius norm of H - H^dagger is {norm:e}")]
    NonHermitian { norm: f64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("level {level} is degenerate with level {other}: gap {gap:e} <= tolerance {tolerance:e}")]
    Degenerate {
        level: usize,
        other: usize,
        gap: f64,
        tolerance: f64,
    },

    #[error("path too coarse or possible crossing at step {step}: level {level} overlap {overlap:.3e} below 0.5")]
    PathTooCoarse {
        step: usize,
        level: usize,
        overlap: f64,
    },

    #[error("gauge inconsistency: imaginary residue {residue:e} in Berry connection")]
    GaugeInconsistency { residue: f64 },

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: &'static str },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("vanishing field at {0:?}")]
    VanishingField(Vec<f64>),

    #[error("time step {dt:e} too large: dt * spectral range / hbar = {product:.4} (must be < {limit})")]
    StepTooLarge { dt: f64, product: f64, limit: f64 },

    #[error("state is not normalized: |psi| = {norm}")]
    NotNormalized { norm: f64 },

    #[error("point {0:?} lies outside the field domain")]
    OutOfDomain(Vec<f64>),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("open shell: orbitals {last_occupied} and {first_empty} are degenerate at the Fermi level")]
    OpenShell {
        last_occupied: usize,
        first_empty: usize,
    },
}
