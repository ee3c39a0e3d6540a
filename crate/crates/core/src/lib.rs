//! Evolving domain generalization with a probabilistic sequential
//! autoencoder (LSSAE) and an ERM baseline.
//!
//! The crate is self-contained: dense tensors, a reverse-mode autodiff graph,
//! layers, Adam, distributions, the model, synthetic datasets, training and
//! evaluation all live here.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod datasets;
pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod model;
pub mod nn;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
