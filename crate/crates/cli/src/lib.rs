//! Experiment runner for metric-regularised latent-space Bayesian
//! optimisation: configuration files, artefact formats and the
//! `pretrain`/`finetune`/`bo-run`/`analyze`/`probe`/`regret` pipeline.
//!
//! The numerical work lives in [`latent_bo_core`]; this crate adds the
//! filesystem, threads and the command line.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod output;

pub use commands::{execute, Command, RunOptions};
pub use config::{ExperimentConfig, ResolvedConfig};
pub use error::CliError;
