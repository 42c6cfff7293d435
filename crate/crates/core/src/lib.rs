//! Penalized linear regression with residual and perturbation bootstrap inference.
//!
//! Estimators cover the Lasso, SCAD, MCP, adaptive Lasso, one-step estimators and
//! post-selection OLS. On top of the fits the crate builds studentized and
//! bias-corrected pivots, symmetric bootstrap intervals with a perturbation
//! correction, and a Monte Carlo harness for oracle-approximation diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod intervals;
pub mod linalg;
pub mod model;
pub mod penalties;
pub mod pivots;
pub mod rng;
pub mod solvers;
pub mod weights;

pub use error::{Error, Result};
