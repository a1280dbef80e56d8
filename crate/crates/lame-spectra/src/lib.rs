//! Finite-element machinery for Sturm-Liouville spectral problems attached to
//! the two-dimensional Lame operator of linear elasticity, with first-order
//! factorizations, weighted Sobolev norms, and non-selfadjoint perturbations.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`] - conforming triangle meshes, boundary tagging, refinement, io;
//! * [`problem`] - coefficients, weights, factorization choice, perturbation
//!   data, admissibility checks, config parsing and built-in problems;
//! * [`operators`] - pointwise action of the factorization symbols, stress
//!   traction, conormal derivatives and the tangential boundary operator;
//! * [`assembly`] - P1 Galerkin assembly of the sesquilinear forms into dense
//!   complex pencils, plus weighted and fractional Sobolev Gram matrices;
//! * [`spectral`] - Cholesky reduction, the dense complex eigensolver, root
//!   chains (Jordan structure), form norms and the spectral sector check;
//! * [`experiments`] - reproducible numerical experiments with closed-form
//!   oracles and machine-checkable verdicts;
//! * [`cli`] - the `lame-spectra` command line front end.

pub mod assembly;
pub mod cli;
pub mod experiments;
pub mod linalg;
pub mod mesh;
pub mod operators;
pub mod problem;
pub mod spectral;

pub use linalg::{CMat, CVec, C64};
