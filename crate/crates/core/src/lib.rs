//! Nonparametric function-on-scalar regression with deep ReLU networks.
//!
//! The estimator feeds `(x₁, …, x_d, t)` through a dense ReLU network and
//! fits it to discretely observed response curves by minimising a
//! quadrature-weighted squared error with an L2 penalty. Alongside it the
//! crate ships the synthetic benchmark scenarios, a cubic-spline linear
//! baseline, MISPE evaluation, k-fold cross-validation, and file I/O.

// `!(x > 0.0)` forms are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod network;
pub mod numerics;
pub mod scenarios;
pub mod training;

pub use error::{Error, Result};
