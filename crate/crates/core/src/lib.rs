// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! DBN-informed convergent cross mapping for multichannel time series.
//!
//! The standard cross map predicts a target from the nearest neighbors of a
//! source's delay embedding. The DBN-informed variant reweights those
//! neighbors by the probability a linear-Gaussian dynamic Bayesian network
//! assigns to each neighbor's target value.

pub mod baselines;
pub mod crossmap;
pub mod dbn;
pub mod embedding;
pub mod error;
pub mod intervention;
pub mod metrics;
pub mod neighbors;
pub mod pipeline;
pub mod rng;
pub mod series;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
