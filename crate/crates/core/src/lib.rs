//! Exit-time stochastic dominance for biased walks and drifted Brownian motion.
//!
//! The walk half is exact (dynamic programs over an absorbing chain, in `f64`
//! or rational arithmetic). The Brownian half combines series/quadrature
//! evaluation of survival functions with reproducible Monte Carlo.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bm_analytic;
pub mod bm_sde;
pub mod error;
pub mod quadrature;
pub mod rng;
pub mod rw_exact;
pub mod rw_measure;
pub mod scalar;
pub mod stats_verify;
pub mod suite;

pub use error::{Error, Result};
pub use scalar::{Arith, Bias, Scalar};
