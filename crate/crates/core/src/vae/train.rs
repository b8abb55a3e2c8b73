use alloc::{vec, vec::Vec};

use rand::{seq::SliceRandom, Rng};

use super::{
    elbo::{loss_and_grad, Batch, MetricTerm},
    standard_normal, VaeError, VaeParams,
};
use crate::{
    diffcore::{Adam, DiffError, Tensor},
    metric::{normalize_values, sample_minibatch, weights, MetricConfig, MetricError, TupleBatch, WeightScheme},
    ConfigError,
};

/// Optimiser and schedule settings for one training phase.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// `β_KL` at the first epoch; annealed linearly to `beta_kl_final`.
    pub beta_kl_init: f64,
    pub beta_kl_final: f64,
    /// Multiplier of the target-prediction log-likelihood.
    pub beta_r: f64,
}

impl Default for TrainConfig {
    /// Retraining settings of the topology experiments.
    fn default() -> Self {
        Self { epochs: 1, lr: 1e-3, batch_size: 256, beta_kl_init: 1e-4, beta_kl_final: 1e-4, beta_r: 10.0 }
    }
}

impl TrainConfig {
    /// Pretraining settings of the topology experiments.
    pub fn pretrain_default() -> Self {
        Self { epochs: 300, batch_size: 1024, beta_kl_init: 1e-6, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(ConfigError::new("lr", "learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(ConfigError::new("batch_size", "must be at least 1"));
        }
        for (name, v) in [("beta_kl_init", self.beta_kl_init), ("beta_kl_final", self.beta_kl_final), ("beta_r", self.beta_r)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ConfigError::new(name, "must be non-negative"));
            }
        }
        Ok(())
    }

    /// `β_KL` used during `epoch` (0-based) of a pretraining run.
    pub fn beta_kl_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.beta_kl_final;
        }
        let t = epoch as f64 / (self.epochs - 1) as f64;
        self.beta_kl_init + (self.beta_kl_final - self.beta_kl_init) * t
    }
}

/// Per-epoch mean training loss (`-ELBO` or `-ELBO_DML`) and diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    /// Steps whose batch had no valid metric tuple (metric term skipped).
    pub metric_skipped: usize,
    pub steps: usize,
}

/// Which labelled component the fine-tuning objective uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelObjective {
    /// Weighted ELBO only.
    Label,
    /// Weighted ELBO plus target prediction.
    LabelTp,
    /// Weighted ELBO minus `β_metric`·metric loss.
    LabelMetric(MetricConfig),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinetuneSpec {
    pub objective: LabelObjective,
    pub weights: WeightScheme,
    /// Adds the unlabelled ELBO (unweighted mean over an unlabelled batch).
    pub include_unlabeled: bool,
}

/// Labelled features and raw objective values, plus optional unlabelled
/// features.
#[derive(Debug, Clone, Copy)]
pub struct FinetuneData<'a> {
    pub x: &'a Tensor,
    pub f: &'a [f64],
    pub unlabeled: Option<&'a Tensor>,
}

fn shuffled<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

fn diverged(epoch: usize, step: usize) -> impl Fn(VaeError) -> VaeError {
    move |e| match e {
        VaeError::Diff(source @ DiffError::NonFinite { .. }) => VaeError::Diverged { epoch, step, source },
        other => other,
    }
}

fn step(params: &mut VaeParams, adam: &mut Adam, batch: &Batch<'_>, epoch: usize, step: usize) -> Result<f64, VaeError> {
    let (loss, grads) = loss_and_grad(params, batch).map_err(diverged(epoch, step))?;
    if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(VaeError::Diverged { epoch, step, source: DiffError::NonFinite { op: "loss" } });
    }
    adam.step(params.tensors_mut(), &grads);
    Ok(loss)
}

/// Unsupervised ELBO training on unlabelled features with the linear
/// `β_KL` anneal. Each step draws a shuffled batch, then its noise.
pub fn pretrain<R: Rng + ?Sized>(
    params: &mut VaeParams,
    x: &Tensor,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainReport, VaeError> {
    cfg.validate()?;
    let mut adam = Adam::new(cfg.lr, params.arch().tensor_shapes());
    let mut report = TrainReport::default();
    let d = params.latent_dim();
    for epoch in 0..cfg.epochs {
        let beta_kl = cfg.beta_kl_at(epoch);
        let order = shuffled(x.rows(), rng);
        let mut total = 0.0;
        let chunks = order.chunks(cfg.batch_size);
        let n_batches = chunks.len();
        for (s, idx) in chunks.enumerate() {
            let xb = x.gather_rows(idx);
            let noise = standard_normal(idx.len(), d, rng);
            let w = vec![1.0 / idx.len() as f64; idx.len()];
            total += step(params, &mut adam, &Batch::labelled(&xb, &noise, &w, beta_kl), epoch, s)?;
            report.steps += 1;
        }
        report.epoch_losses.push(total / n_batches as f64);
    }
    Ok(report)
}

fn standardize(f: &[f64]) -> Vec<f64> {
    let n = f.len() as f64;
    let mean = f.iter().sum::<f64>() / n;
    let var = f.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = if var > 0.0 { num_traits::Float::sqrt(var) } else { 1.0 };
    f.iter().map(|v| (v - mean) / sd).collect()
}

fn normalized_batch_weights(w: &[f64], idx: &[usize]) -> Vec<f64> {
    let first = w[idx[0]];
    if idx.iter().all(|&i| w[i] == first) {
        return vec![1.0 / idx.len() as f64; idx.len()];
    }
    let total: f64 = idx.iter().map(|&i| w[i]).sum();
    idx.iter().map(|&i| w[i] / total).collect()
}

fn draw_tuples<R: Rng + ?Sized>(values: &[f64], cfg: &MetricConfig, want: usize, rng: &mut R) -> Result<Option<TupleBatch>, VaeError> {
    match sample_minibatch(values, cfg, want, rng) {
        Ok(t) => Ok(Some(t)),
        Err(MetricError::BatchTooLarge { available, .. }) => Ok(Some(sample_minibatch(values, cfg, available, rng)?)),
        Err(MetricError::NoValidTuple { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Weighted fine-tuning on labelled data (warm start from `params`), with
/// `β_KL` fixed at `cfg.beta_kl_final`.
///
/// Per-datum weights come from `spec.weights` over the whole labelled set
/// and are renormalised within each batch. Metric tuples are drawn within
/// the batch on min-max normalised values, one tuple per batch element
/// (fewer if the batch has fewer valid tuples); a batch without any valid
/// tuple skips the metric term and is counted in the report. With a zero
/// metric multiplier and uniform weights this reproduces [`pretrain`]
/// step for step.
pub fn finetune<R: Rng + ?Sized>(
    params: &mut VaeParams,
    data: &FinetuneData<'_>,
    cfg: &TrainConfig,
    spec: &FinetuneSpec,
    rng: &mut R,
) -> Result<TrainReport, VaeError> {
    cfg.validate()?;
    let n = data.x.rows();
    if data.f.len() != n {
        return Err(VaeError::BatchMismatch);
    }
    let w = weights(data.f, spec.weights)?;
    let norm = normalize_values(data.f);
    let needs_targets = matches!(spec.objective, LabelObjective::LabelTp);
    if needs_targets && !params.arch().target_head {
        return Err(VaeError::MissingTargetHead);
    }
    let targets = needs_targets.then(|| standardize(data.f));
    let metric = match spec.objective {
        LabelObjective::LabelMetric(m) if m.beta_metric > 0.0 => Some(m),
        _ => None,
    };
    let unlabeled = data.unlabeled.filter(|_| spec.include_unlabeled);

    let mut adam = Adam::new(cfg.lr, params.arch().tensor_shapes());
    let mut report = TrainReport::default();
    let d = params.latent_dim();
    let beta_kl = cfg.beta_kl_final;
    for epoch in 0..cfg.epochs {
        let order = shuffled(n, rng);
        let u_order = unlabeled.map(|u| shuffled(u.rows(), rng));
        let mut u_cursor = 0usize;
        let mut total = 0.0;
        let chunks = order.chunks(cfg.batch_size);
        let n_batches = chunks.len();
        for (s, idx) in chunks.enumerate() {
            let xb = data.x.gather_rows(idx);
            let noise = standard_normal(idx.len(), d, rng);
            let wb = normalized_batch_weights(&w, idx);
            let tb: Option<Vec<f64>> = targets.as_ref().map(|t| idx.iter().map(|&i| t[i]).collect());
            let vb: Vec<f64> = idx.iter().map(|&i| norm[i]).collect();
            let tuples = match &metric {
                Some(m) => {
                    let t = draw_tuples(&vb, m, idx.len(), rng)?;
                    if t.is_none() {
                        report.metric_skipped += 1;
                    }
                    t
                }
                None => None,
            };
            let tuple_weights = tuples.as_ref().map(|t| {
                let raw = t.weights(&wb);
                let total: f64 = raw.iter().sum();
                if total > 0.0 {
                    raw.iter().map(|v| v / total).collect()
                } else {
                    vec![1.0 / raw.len() as f64; raw.len()]
                }
            });
            let u_batch = match (unlabeled, &u_order) {
                (Some(u), Some(uo)) => {
                    let take: Vec<usize> = (0..idx.len()).map(|k| uo[(u_cursor + k) % uo.len()]).collect();
                    u_cursor += idx.len();
                    let xu = u.gather_rows(&take);
                    let nu = standard_normal(take.len(), d, rng);
                    Some((xu, nu))
                }
                _ => None,
            };
            let batch = Batch {
                x: &xb,
                noise: &noise,
                weights: &wb,
                beta_kl,
                targets: tb.as_deref(),
                beta_r: cfg.beta_r,
                metric: match (&metric, &tuples, &tuple_weights) {
                    (Some(cfg), Some(tuples), Some(tw)) => {
                        Some(MetricTerm { cfg, values: &vb, tuples, tuple_weights: tw })
                    }
                    _ => None,
                },
                unlabeled: u_batch.as_ref().map(|(x, n)| (x, n)),
            };
            total += step(params, &mut adam, &batch, epoch, s)?;
            report.steps += 1;
        }
        report.epoch_losses.push(total / n_batches as f64);
    }
    Ok(report)
}
