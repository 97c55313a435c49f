//! Second-order adiabatic package for parameterized quantum Hamiltonians.
//!
//! For a fast Hamiltonian `H(X)` over slow coordinates `X`, the crate computes
//! the Berry connection and curvature, the quantum metric, the induced scalar
//! potential, the induced (cranking) inertia and the effective slow-variable
//! Hamiltonian built from the total inertia, and checks them against direct
//! time-dependent evolution.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod models;
pub mod spectral;

pub use error::{Error, Result};
pub use spectral::ParameterPoint;
