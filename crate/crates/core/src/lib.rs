//! Inference on continuous-state pairwise Markov random fields.
//!
//! The crate provides particle-message loopy belief propagation with
//! EP-adapted Gaussian proposals (EPBP), the MCMC-proposal particle BP
//! baseline, pure Gaussian EP, and deterministic-mesh oracles used as ground
//! truth for benchmarking.

pub mod densities;
pub mod error;
pub mod gaussian_ep;
pub mod mesh_oracle;
pub mod model;
pub mod particles;
pub mod samplers;
pub mod schedule;

pub use error::{Error, Result};
