//! Cycle-consistent Helmholtz machine laboratory.
//!
//! A self-contained CPU implementation of a five-network generative
//! architecture trained with a cycle-consistent composite objective, together
//! with a wake-sleep baseline, an iterative half-cycle inference engine with
//! fixed-point diagnostics, four evaluation metrics, synthetic and MNIST data
//! pipelines, and a goal-seeded grid-world planner.
//!
//! Everything is built on a small dense-tensor core with reverse-mode
//! automatic differentiation over a recorded tape ([`tape`]) and a fully
//! specified, portable random number generator ([`rng`]), so that every run
//! is reproducible bit-for-bit from its seed.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod dist;
pub mod error;
pub mod experiments;
pub mod infer;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod planner;
pub mod rng;
pub mod svg;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::SeededRng;
pub use tensor::Tensor;
