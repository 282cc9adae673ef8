//! Joint latent variable model for oral reading accuracy (words read
//! correctly per item, probit-binomial) and speed (log reading time per item,
//! normal), with correlated Gaussian traits.
//!
//! The crate provides closed-form model moments, method-of-moments and
//! Monte Carlo EM estimation, posterior trait scoring, leave-item-out
//! prediction, simulation, and the CSV formats used by the `orfem` binary.

pub mod cli;
pub mod error;
pub mod fit;
pub mod io;
pub mod kernels;
pub mod mcem;
pub mod model;
pub mod mom;
pub mod scoring;
pub mod simulate;
pub mod study;

pub use error::{OrfError, Result};
