pub mod cli;
pub mod diagnostics;
pub mod empirics;
pub mod error;
pub mod estimator;
pub mod extremal;
pub mod models;
pub mod montecarlo;
pub mod output;
pub mod rng;
pub mod stats;

#[cfg(test)]
pub(crate) mod quadrature;

pub use error::{Error, Result};
