//! Metric-regularised latent-space Bayesian optimisation.
//!
//! A VAE maps structured inputs to a low-dimensional latent space, a GP
//! surrogate with expected-improvement acquisition searches that space, and
//! the VAE is periodically retrained on the acquired labels with a weighted
//! ELBO plus a continuous-label deep-metric regulariser that pulls points
//! with similar objective values together.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration
//! parsing and the command-line runner live in the `latent-bo` crate.
//!
//! Module map:
//!
//! - [`diffcore`]: dense matrices, a reverse-mode tape, Cholesky solves, Adam.
//! - [`metric`]: the four metric losses, partitioning, weights, tuple sampling.
//! - [`vae`]: encoder/decoder, ELBO components, pretrain and fine-tune loops.
//! - [`gp`]: RBF GP surrogate, marginal-likelihood fitting, EI and its maximiser.
//! - [`boloop`]: the optimise/retrain loop and regret accounting.
//! - [`tasks`]: synthetic shape and sequence tasks with known optima.
//! - [`analysis`]: latent separation, GP generalisation, domain-recovery probe.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod analysis;
pub mod boloop;
pub mod diffcore;
pub mod error;
pub mod gp;
pub mod math;
pub mod metric;
pub mod rng;
pub mod tasks;
pub mod vae;

pub use error::{ConfigError, Error};
