//! Adaptive dropout for multilayer perceptrons driven by an Ising energy.
//!
//! Instead of dropping units at random, this crate scores every
//! connection of the input and hidden layers by how saturated its
//! mini-batch activation statistic is, assembles those scores into a
//! binary pairwise energy, and minimizes it with a simulated annealer.
//! The minimizing state decides which units train in the next mini-batch;
//! the same mask can compress the model at inference time.
//!
//! The crate is organized around five modules:
//!
//! - [`math`]: dense matrices, sigmoid, softmax cross-entropy, Adam.
//! - [`ising`]: the cost map, instance builder, energy, annealer, and an
//!   exhaustive oracle for small instances.
//! - [`mlp`]: masked forward/backward passes and the mask-merged training
//!   loop with working (`W`) and persistent (`W*`) weight banks.
//! - [`data`]: IDX ingestion (MNIST-style, gzip or raw), shuffling,
//!   batching, and stratified subsetting.
//! - [`harness`]: experiment configs, compression accounting, reports,
//!   grids, and masked-input images.
//!
//! Start with the `examples/` directory: each example is a runnable tour
//! of one capability, from the cost map up to a full training grid. The
//! `ising-dropout` binary wraps the harness for batch use.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod harness;
pub mod ising;
pub mod math;
pub mod mlp;

pub use error::{Error, Result};
