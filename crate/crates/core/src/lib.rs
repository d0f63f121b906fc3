//! Failure-probability laws for systems that draw N hypotheses from a
//! generator and let a reranker pick one.

#![allow(clippy::excessive_precision)]

pub mod curve;
pub mod empirical;
pub mod error;
pub mod fit;
pub mod laws;
pub mod predict;
pub mod rank;
pub mod rng;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
