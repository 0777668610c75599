//! Finite-volume and particle solvers for nonlinear Fokker–Planck–Kolmogorov
//! equations `∂_tμ = L*_μ μ` with measure-dependent drift.

pub mod cauchy;
pub mod convergence;
pub mod drift;
pub mod error;
pub mod functions;
pub mod invariants;
pub mod io;
pub mod linear_solver;
pub mod measures;
pub mod particles;
pub mod stationary;

pub use error::{FpkError, Result};
