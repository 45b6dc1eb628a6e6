//! Numerical laboratory for linear cocycles over invertible ergodic bases.
//!
//! The crate covers Lyapunov spectra and Oseledets splittings, tempered
//! exponential dichotomy certificates, the Green-series solver for the
//! admissibility equation f(ω) − A(σ^{−1}ω)f(σ^{−1}ω) = g(ω), the
//! zero-exponent counterexample construction, and the perturbation
//! fixed-point solver.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admissibility;
pub mod base;
pub mod cocycle;
pub mod config;
pub mod degeneracy;
pub mod dichotomy;
pub mod error;
pub mod linalg;
pub mod met;
pub mod report;
pub mod robustness;
pub mod runner;

pub use error::{LabError, Result};
