//! Support-size estimation for discrete distributions.
//!
//! The central estimator picks the coefficients of a degree-`L` polynomial by minimizing,
//! over a grid of Poisson means, the worst case of a variance-regularized and
//! exponentially weighted Chebyshev objective. The crate also ships the classical
//! baselines (unweighted shifted Chebyshev, Good-Turing, naive counting), sample
//! ingestion, seeded synthetic distributions, and an experiment harness.

#![forbid(unsafe_code)]
// Negated comparisons are the NaN-rejecting form of these checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod poly;
pub mod solver;

pub use error::{Error, Result};

/// Estimator polynomial over `f64`.
pub type Polynomial = poly::Poly<f64>;
/// Estimator polynomial over exact rationals.
pub type ExactPolynomial = poly::Poly<num_rational::BigRational>;
