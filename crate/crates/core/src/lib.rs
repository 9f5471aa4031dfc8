//! Bayesian changepoint extreme value mixture models.
//!
//! A finite Gamma or Normal mixture describes the bulk of a time series and
//! each regime between consecutive changepoints carries its own generalized
//! Pareto tail above its own threshold. Parameters are sampled with an
//! adaptive block Metropolis-Hastings scheme; fitted chains feed information
//! criteria and tail-risk functionals.

pub mod dists;
pub mod error;
pub mod io;
pub mod model;
pub mod preprocess;
pub mod risk;
pub mod sampler;
pub mod select;
pub mod simulate;

pub use error::{Error, Result};
