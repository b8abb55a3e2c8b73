use alloc::{collections::BTreeSet, vec::Vec};

use rand::{Rng, SeedableRng};

use super::{expected_objective, gp_at, vae_at, BoConfig, BoError, RegretCurve};
use crate::{
    diffcore::Tensor,
    gp::{fit, optimize_acquisition, select_training_subset, Bounds, GpModel, Standardizer},
    metric::MetricConfig,
    rng::ExpRng,
    tasks::{Dataset, TaskKind},
    vae::{finetune, standard_normal, FinetuneData, LabelObjective, TrainConfig, TrainReport, VaeError, VaeParams},
};

/// One acquisition in the run trace.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRecord {
    /// Global acquisition index, from 0.
    pub step: usize,
    /// Retraining round `ℓ`, from 0.
    pub epoch: usize,
    /// Acquisition index `k` within the round.
    pub inner: usize,
    pub acquired_f: f64,
    pub incumbent_f: f64,
    pub ei_value: f64,
    /// `f(x*) − E_{x∼g(·|ẑ)}[f(x)]` (NaN when regret sampling is off).
    pub regret_term: f64,
    pub cum_regret: f64,
}

/// Posterior means of the encoder, one row per input.
pub fn build_latent_dataset(params: &VaeParams, inputs: &[Vec<u8>]) -> Result<Vec<Vec<f64>>, VaeError> {
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    let x = params.likelihood().features(inputs)?;
    let post = params.encode(&x)?;
    Ok((0..post.mean.rows()).map(|r| post.mean.row_slice(r).to_vec()).collect())
}

/// Mutable state of a run between acquisitions.
#[derive(Debug, Clone)]
pub struct BoState {
    pub task: TaskKind,
    /// Labelled data `D_L` (visible initial labels plus acquisitions).
    pub labeled: Dataset,
    /// Latent codes `D_Z`, aligned with `labeled`.
    pub latent: Vec<Vec<f64>>,
    pub params: VaeParams,
    pub gp: Option<GpModel>,
    /// Target standardisation of the current GP.
    pub standardizer: Standardizer,
    pub seen: BTreeSet<Vec<u8>>,
    /// Black-box evaluations spent on acquisitions.
    pub evaluations: usize,
}

impl BoState {
    pub fn new(task: TaskKind, labeled: Dataset, params: VaeParams) -> Self {
        let seen = labeled.inputs.iter().cloned().collect();
        Self { task, labeled, latent: Vec::new(), params, gp: None, standardizer: Standardizer { mean: 0.0, sd: 1.0 }, seen, evaluations: 0 }
    }

    pub fn incumbent(&self) -> f64 {
        self.labeled.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Re-encodes `D_L` and fits a fresh GP on the training subset.
    pub fn rebuild_surrogate<R: Rng + ?Sized>(&mut self, cfg: &BoConfig, step: usize, rng: &mut R) -> Result<(), BoError> {
        self.latent = build_latent_dataset(&self.params, &self.labeled.inputs).map_err(vae_at(step))?;
        let n = self.labeled.len();
        let idx = if n <= cfg.gp_n_best + cfg.gp_n_rand {
            (0..n).collect()
        } else {
            select_training_subset(&self.labeled.values, cfg.gp_n_best, cfg.gp_n_rand, rng).map_err(gp_at(step))?
        };
        let raw: Vec<f64> = idx.iter().map(|&i| self.labeled.values[i]).collect();
        self.standardizer = Standardizer::fit(&raw);
        let y = self.standardizer.forward_all(&raw);
        let rows: Vec<&[f64]> = idx.iter().map(|&i| self.latent[i].as_slice()).collect();
        let z = Tensor::from_rows(&rows).map_err(|e| BoError::Gp { step, source: e.into() })?;
        self.gp = Some(fit(z, y, &cfg.fit, rng).map_err(gp_at(step))?);
        Ok(())
    }
}

/// Outcome of one acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquired {
    pub x: Vec<u8>,
    pub f: f64,
    /// Latent point that was decoded (after any perturbation).
    pub z: Vec<f64>,
    pub ei: f64,
    /// Duplicate decodes rejected before `x` was found.
    pub duplicates: usize,
    pub fallback: bool,
}

/// Maximises EI, decodes a novel input (perturbing `ẑ` or restarting the
/// acquisition on duplicates), evaluates it once and appends it to `D_L`,
/// `D_Z` and the GP.
pub fn acquire_step<R: Rng + ?Sized>(state: &mut BoState, cfg: &BoConfig, step: usize, rng: &mut R) -> Result<Acquired, BoError> {
    let gp = state.gp.as_ref().ok_or(BoError::NoLabels)?;
    let xi = gp.best_target();
    let lengthscales = gp.hyperparams().lengthscales();
    let sigma = cfg.perturb_scale * gp.hyperparams().mean_lengthscale();
    let bounds = Bounds::from_data(gp.inputs(), &lengthscales);
    let d = gp.dim();
    let mut duplicates = 0usize;
    let (x, z, acq) = 'search: loop {
        let acq = optimize_acquisition(gp, &bounds, xi, &cfg.acquisition, rng).map_err(gp_at(step))?;
        let mut z = acq.z.clone();
        for attempt in 0..=cfg.perturb_attempts {
            if attempt > 0 {
                let noise = standard_normal(1, d, rng);
                z = acq.z.iter().zip(noise.data()).map(|(a, e)| a + sigma * e).collect();
            }
            let x = state.params.sample_decode(&z, rng).map_err(vae_at(step))?;
            if !state.seen.contains(&x) {
                break 'search (x, z, acq);
            }
            duplicates += 1;
            if duplicates >= cfg.max_duplicates {
                return Err(BoError::Duplicates { step, attempts: duplicates });
            }
        }
    };
    let f = state.task.objective(&x);
    state.evaluations += 1;
    state.seen.insert(x.clone());
    state.labeled.push(x.clone(), f);
    state.latent.push(z.clone());
    let y = state.standardizer.forward(f);
    state.gp.as_mut().expect("fitted").append(&z, y).map_err(gp_at(step))?;
    Ok(Acquired { x, f, z, ei: acq.ei, duplicates, fallback: acq.fallback })
}

/// Data a run starts from.
#[derive(Debug, Clone)]
pub struct RunInputs<'a> {
    pub task: TaskKind,
    /// Full initial labelled set; semi-supervised runs subsample it.
    pub labeled: &'a Dataset,
    /// Unlabelled inputs, used only when the retraining objective includes
    /// the unlabelled ELBO.
    pub unlabeled: &'a [Vec<u8>],
    /// Pretrained model the first retraining warm-starts from.
    pub params: VaeParams,
}

/// Passed to the hook after every retraining.
#[derive(Debug)]
pub struct RetrainEvent<'a> {
    pub epoch: usize,
    pub state: &'a BoState,
    pub report: &'a TrainReport,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub state: BoState,
    pub acquired_z: Vec<Vec<f64>>,
    pub regret: RegretCurve,
    /// Mean loss of each retraining's last epoch.
    pub retrain_losses: Vec<f64>,
    pub metric_skipped: usize,
    pub visible_labels: usize,
    pub retrainings: usize,
}

/// Runs the optimise/retrain loop without a hook.
pub fn run<R: Rng + ?Sized>(
    inputs: RunInputs<'_>,
    bo: &BoConfig,
    metric: &MetricConfig,
    train: &TrainConfig,
    rng: &mut R,
) -> Result<RunOutput, BoError> {
    run_with_hook(inputs, bo, metric, train, rng, &mut |_| {})
}

/// For each of `L = ⌈B/q⌉` rounds: retrain the VAE with the baseline's
/// objective (rank weights recomputed over the current `D_L`), re-encode
/// `D_L`, fit a GP from scratch, then make up to `q` acquisitions, leaving
/// the round early once the acquired EI drops below `τ`. The budget is
/// never exceeded.
pub fn run_with_hook<R: Rng + ?Sized>(
    inputs: RunInputs<'_>,
    bo: &BoConfig,
    metric: &MetricConfig,
    train: &TrainConfig,
    rng: &mut R,
    hook: &mut dyn FnMut(&RetrainEvent<'_>),
) -> Result<RunOutput, BoError> {
    bo.validate()?;
    train.validate().map_err(|e| e.within("train"))?;
    if let LabelObjective::LabelMetric(m) = bo.baseline.objective(metric) {
        m.validate().map_err(|e| e.within("metric"))?;
    }
    if inputs.labeled.is_empty() {
        return Err(BoError::NoLabels);
    }
    let visible = bo.visible_labels(inputs.labeled.len());
    let labeled = if visible < inputs.labeled.len() {
        let mut idx: Vec<usize> = rand::seq::index::sample(rng, inputs.labeled.len(), visible).into_vec();
        idx.sort_unstable();
        inputs.labeled.subset(&idx)
    } else {
        inputs.labeled.clone()
    };
    let mut regret_rng = ExpRng::seed_from_u64(rng.random());
    let unlabeled_x = if bo.include_unlabeled && !inputs.unlabeled.is_empty() {
        Some(inputs.params.likelihood().features(inputs.unlabeled).map_err(vae_at(0))?)
    } else {
        None
    };
    let spec = bo.finetune_spec(metric);
    let mut state = BoState::new(inputs.task, labeled, inputs.params);
    let q = bo.inner_steps();
    let outer = bo.outer_steps();
    let mut out = RunOutput {
        trace: Vec::new(),
        state: state.clone(),
        acquired_z: Vec::new(),
        regret: RegretCurve::default(),
        retrain_losses: Vec::new(),
        metric_skipped: 0,
        visible_labels: visible,
        retrainings: 0,
    };
    let f_star = inputs.task.f_star();
    let task = inputs.task;
    for epoch in 0..outer {
        if state.evaluations >= bo.budget {
            break;
        }
        let step = state.evaluations;
        let x = state.params.likelihood().features(&state.labeled.inputs).map_err(vae_at(step))?;
        let data = FinetuneData { x: &x, f: &state.labeled.values, unlabeled: unlabeled_x.as_ref() };
        let report = finetune(&mut state.params, &data, train, &spec, rng).map_err(vae_at(step))?;
        out.retrain_losses.push(report.epoch_losses.last().copied().unwrap_or(f64::NAN));
        out.metric_skipped += report.metric_skipped;
        out.retrainings += 1;
        state.rebuild_surrogate(bo, step, rng)?;
        hook(&RetrainEvent { epoch, state: &state, report: &report });
        for inner in 0..q {
            if state.evaluations >= bo.budget {
                break;
            }
            let step = state.evaluations;
            let acq = acquire_step(&mut state, bo, step, rng)?;
            let (term, se) = if bo.regret_samples > 0 {
                let (m, se) = expected_objective(&state.params, &acq.z, |x| task.objective(x), bo.regret_samples, &mut regret_rng);
                (f_star - m, se)
            } else {
                (f64::NAN, f64::NAN)
            };
            out.regret.push(term, se);
            out.trace.push(TraceRecord {
                step,
                epoch,
                inner,
                acquired_f: acq.f,
                incumbent_f: state.incumbent(),
                ei_value: acq.ei,
                regret_term: term,
                cum_regret: out.regret.total(),
            });
            out.acquired_z.push(acq.z);
            if acq.ei < bo.tau {
                break;
            }
        }
    }
    out.state = state;
    Ok(out)
}
