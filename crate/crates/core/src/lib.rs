//! Exact and approximate inference for hybrid mixed networks: Bayesian
//! networks over discrete and conditional linear-Gaussian variables combined
//! with discrete constraints.

pub mod decomposition;
pub mod error;
pub mod exact;
pub mod genbench;
pub mod ijgp;
pub mod model;
pub mod potential;
pub mod sampler;

pub use error::{Error, Result};
