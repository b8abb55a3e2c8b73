//! The per-seed pipeline shared by the subcommands: data, pretraining,
//! fine-tuning, BO runs, probes and analyses.
//!
//! Each phase draws from its own named stream of the seed, so any phase
//! can be recomputed (or loaded from disk) without shifting the draws of
//! the others.

use latent_bo_core::{
    analysis::{gp_generalization, separation_report, DomainRecoveryProbe, Generalization, RecoveryTrace, SeparationReport},
    boloop::{run_with_hook, BoConfig, RetrainEvent, RunInputs, RunOutput},
    rng::{stream, ExpRng},
    tasks::{generate_dataset, Dataset, TaskSpec},
    vae::{finetune, pretrain, FinetuneData, TrainReport, VaeParams},
};

use crate::{config::ResolvedConfig, error::CliError};

/// The datasets of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedData {
    /// Initial labelled set `D_L`.
    pub labeled: Dataset,
    /// Pretraining pool; its objective values are never shown to a model.
    pub unlabeled: Dataset,
}

pub fn generate_data(task: &TaskSpec, seed: u64) -> SeedData {
    SeedData {
        labeled: generate_dataset(task.kind, task.labeled_size, &mut stream(seed, "data/labeled")),
        unlabeled: generate_dataset(task.kind, task.unlabeled_size, &mut stream(seed, "data/unlabeled")),
    }
}

/// Glorot initialisation followed by unsupervised ELBO training on the
/// unlabelled pool.
pub fn pretrain_model(cfg: &ResolvedConfig, seed: u64, data: &SeedData) -> Result<(VaeParams, TrainReport), CliError> {
    let stage = |what: &str| format!("{what} (seed {seed})");
    let mut params = VaeParams::init(cfg.architecture(), &mut stream(seed, "vae/init")).map_err(|e| CliError::run(stage("init"), e))?;
    let x = params.likelihood().features(&data.unlabeled.inputs).map_err(|e| CliError::run(stage("pretrain"), e))?;
    let report = pretrain(&mut params, &x, &cfg.config.pretrain, &mut stream(seed, "vae/pretrain"))
        .map_err(|e| CliError::run(stage("pretrain"), e))?;
    Ok((params, report))
}

/// One fine-tuning phase with the baseline's objective on the visible labels.
pub fn finetune_model(cfg: &ResolvedConfig, seed: u64, params: &VaeParams, data: &SeedData) -> Result<(VaeParams, TrainReport), CliError> {
    let c = &cfg.config;
    let stage = format!("finetune (seed {seed})");
    let mut rng = stream(seed, "vae/finetune");
    let visible = c.bo.visible_labels(data.labeled.len());
    let labeled = if visible < data.labeled.len() {
        let mut idx = rand::seq::index::sample(&mut rng, data.labeled.len(), visible).into_vec();
        idx.sort_unstable();
        data.labeled.subset(&idx)
    } else {
        data.labeled.clone()
    };
    let mut out = params.clone();
    let lik = out.likelihood();
    let x = lik.features(&labeled.inputs).map_err(|e| CliError::run(stage.clone(), e))?;
    let xu = if c.bo.include_unlabeled {
        Some(lik.features(&data.unlabeled.inputs).map_err(|e| CliError::run(stage.clone(), e))?)
    } else {
        None
    };
    let fd = FinetuneData { x: &x, f: &labeled.values, unlabeled: xu.as_ref() };
    let report = finetune(&mut out, &fd, &c.train, &c.bo.finetune_spec(&c.metric), &mut rng).map_err(|e| CliError::run(stage, e))?;
    Ok((out, report))
}

/// The optimise/retrain loop from a pretrained model, reporting every
/// retraining to `hook`.
pub fn bo_run(
    cfg: &ResolvedConfig,
    bo: &BoConfig,
    seed: u64,
    data: &SeedData,
    params: VaeParams,
    hook: &mut dyn FnMut(&RetrainEvent<'_>),
) -> Result<RunOutput, CliError> {
    let c = &cfg.config;
    let inputs = RunInputs { task: c.task.kind, labeled: &data.labeled, unlabeled: &data.unlabeled.inputs, params };
    run_with_hook(inputs, bo, &c.metric, &c.train, &mut stream(seed, "bo"), hook)
        .map_err(|e| CliError::run(format!("bo-run (seed {seed}, baseline {})", cfg.label()), e))
}

/// A BO run with the domain-recovery probe evaluated on the pretrained
/// model (`ℓ = 0`) and after every retraining.
pub fn probe_run(cfg: &ResolvedConfig, seed: u64, data: &SeedData, params: VaeParams) -> Result<(RunOutput, RecoveryTrace), CliError> {
    let task = cfg.config.task.kind;
    let mut probe = DomainRecoveryProbe::new(task, cfg.config.probe);
    let mut rng = stream(seed, "probe");
    let stage = format!("probe (seed {seed})");
    let step = |probe: &mut DomainRecoveryProbe, epoch: usize, params: &VaeParams, rng: &mut ExpRng| -> Result<(), CliError> {
        let x = params.likelihood().features(&[task.optimum()]).map_err(|e| CliError::run(stage.clone(), e))?;
        let post = params.encode(&x).map_err(|e| CliError::run(stage.clone(), e))?;
        let sd: Vec<f64> = post.logvar.row_slice(0).iter().map(|lv| (0.5 * lv).exp()).collect();
        probe.step(epoch, params, post.mean.row_slice(0), &sd, rng);
        Ok(())
    };
    step(&mut probe, 0, &params, &mut rng)?;
    let mut failure = None;
    let out = bo_run(cfg, &cfg.config.bo, seed, data, params, &mut |ev| {
        if failure.is_none() {
            failure = step(&mut probe, ev.epoch + 1, &ev.state.params, &mut rng).err();
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((out, probe.into_trace()))
}

/// Latent separation and held-out GP likelihood of one model on `D_L`.
pub fn analyze_model(cfg: &ResolvedConfig, seed: u64, params: &VaeParams, data: &SeedData) -> Result<(SeparationReport, Generalization), CliError> {
    let stage = format!("analyze (seed {seed})");
    let sep = separation_report(params, &data.labeled).map_err(|e| CliError::run(stage.clone(), e))?;
    let gen = gp_generalization(params, &data.labeled, &cfg.config.analysis, &mut stream(seed, "analysis/splits"))
        .map_err(|e| CliError::run(stage, e))?;
    Ok((sep, gen))
}
