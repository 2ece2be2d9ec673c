//! Spiking neural network training with Spike Response Model neurons,
//! surrogate-gradient temporal backpropagation and spike-count losses.

pub mod arch;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod init;
pub mod kernels;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod neuron;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
