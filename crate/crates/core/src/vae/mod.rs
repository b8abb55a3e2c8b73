//! Variational autoencoder: MLP encoder/decoder, the ELBO components used
//! by every baseline, and the pretrain / fine-tune loops.

mod elbo;
mod model;
mod train;

pub use elbo::{
    com_label, com_label_tp, com_metric, kl_standard_normal, loss_and_grad, metric_loss_grad, per_datum_elbo, Batch,
    MetricTerm,
};
pub use model::{standard_normal, Activation, Architecture, Likelihood, Posterior, VaeParams, LOGVAR_CLAMP};
pub use train::{finetune, pretrain, FinetuneData, FinetuneSpec, LabelObjective, TrainConfig, TrainReport};

use crate::{diffcore::DiffError, metric::MetricError, ConfigError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VaeError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("input has length {got}, expected {expected}")]
    InputShape { expected: usize, got: usize },
    #[error("latent point has dimension {got}, expected {expected}")]
    LatentShape { expected: usize, got: usize },
    #[error("input contains a value outside the task alphabet")]
    InvalidInput,
    #[error("invalid architecture: {0}")]
    Architecture(&'static str),
    #[error("the model has no target-prediction head")]
    MissingTargetHead,
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
    #[error("training diverged at epoch {epoch}, step {step}: {source}")]
    Diverged { epoch: usize, step: usize, source: DiffError },
    #[error("weights, targets or values do not match the batch size")]
    BatchMismatch,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[cfg(test)]
mod tests;
