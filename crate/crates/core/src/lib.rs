//! Random-projection continual learning: frozen nonlinear projections,
//! streaming Gram/prototype statistics and closed-form ridge heads, plus
//! prototype baselines, evaluation protocols and Monte-Carlo checks.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod accumulator;
pub mod baselines;
pub mod error;
pub mod feature_store;
pub mod linalg;
pub mod metrics;
pub mod projection;
pub mod protocols;
pub mod rng;
pub mod solver;
pub mod theory;

pub use error::{Error, Result};
