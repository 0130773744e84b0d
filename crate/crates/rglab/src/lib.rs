//! Numerical laboratory for integrable PT-symmetric spin-1/2 Richardson-Gaudin models.
//!
//! The crate builds conserved charges for XXZ/XYZ Richardson-Gaudin families,
//! verifies integrability conditions and quadratic operator relations, classifies
//! PT-exact vs PT-broken spectra through biorthogonal eigendecompositions,
//! constructs metric/C operators and Hermitian counterparts, simulates closed
//! non-Hermitian and open Lindblad dynamics, solves the Richardson-Bethe
//! equations, and computes perturbative corrections with a CPT-weighted inner
//! product. A config-driven CLI (`rglab`) exposes the same machinery with
//! deterministic CSV/JSON output.
//!
//! # Conventions
//!
//! * Basis label `|0⟩` is spin-up (`S^z` eigenvalue +1/2); `σ⁻` maps `|0⟩ → |1⟩`.
//! * Site 1 occupies the most significant bit of the computational-basis index,
//!   so embedding a local operator is a left fold of Kronecker products.
//! * `ħ = 1` throughout; all quantities are dimensionless or in energy units.

pub mod bethe;
pub mod charges;
pub mod cli;
pub mod dynamics;
pub mod eig;
pub mod error;
pub mod model;
pub mod perturb;
pub mod ptsym;
pub mod qops;

pub use error::{Error, Result};
