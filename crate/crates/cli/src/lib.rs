//! Benchmark harness for continuous-MRF belief propagation: experiment
//! configs, the accuracy/timing/trace benches, image denoising, and the CSV
//! and PGM formats behind the `epbp` binary.

pub mod bench;
pub mod config;
pub mod denoise;
pub mod error;
pub mod image;
pub mod observations;
pub mod pgm;

pub use error::{Error, Result};
