//! Certification of global uniform asymptotic stability (GUAS) for switched
//! linear systems `Ẋ = B_{u(t)} X`, `u(t) ∈ {0, 1}`, whose two matrices share a
//! weak (non-strict) quadratic Lyapunov function.
//!
//! After normalizing the Lyapunov matrix to the identity, stability reduces to
//! uniform observability of a bilinear system living on the common kernel
//! `K = ker(B0ᵀ + B0) ∩ ker(B1ᵀ + B1)`. The pipeline in [`analyzer`] combines
//! the available sufficient conditions into a [`analyzer::Verdict`].

pub mod analyzer;
pub mod bad_locus;
pub mod builtins;
pub mod decomposition;
pub mod error;
pub mod linalg;
pub mod matrix_core;
pub mod observability;
pub mod problem;
pub mod simulator;

pub use error::{GuasError, Result};

/// Default relative tolerance used for semidefiniteness and rank decisions.
pub const DEFAULT_TOL: f64 = 1e-9;
