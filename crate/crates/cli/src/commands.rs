//! Subcommand implementations. Each seed writes into `out/seed_<n>/`;
//! cross-seed aggregates go to `out/`.

use std::{
    path::{Path, PathBuf},
    sync::{
        atomic::{AtomicUsize, Ordering},
        Mutex,
    },
};

use latent_bo_core::{
    analysis::summarize,
    boloop::{BoConfig, Schedule},
    vae::VaeParams,
    ConfigError,
};
use log::info;
use serde_json::json;

use crate::{
    config::ResolvedConfig,
    error::CliError,
    experiment::{self, SeedData},
    formats::{load_checkpoint, load_dataset, save_checkpoint, save_dataset, write_atomic},
    output,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Pretrain,
    Finetune,
    BoRun,
    Analyze,
    Probe,
    Regret { two_thirds: bool },
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Pretrain => "pretrain",
            Command::Finetune => "finetune",
            Command::BoRun => "bo-run",
            Command::Analyze => "analyze",
            Command::Probe => "probe",
            Command::Regret { .. } => "regret",
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Worker threads for the seed fan-out.
    pub parallel: usize,
    /// A previous `pretrain` output directory to load data and weights from.
    pub from: Option<PathBuf>,
    /// Checkpoints to analyse instead of the pipeline's own models.
    pub checkpoints: Vec<PathBuf>,
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Runs `f` for every seed on up to `parallel` threads. Results come back
/// in seed order; the first failing seed's error is returned.
pub fn for_each_seed<T: Send>(seeds: &[u64], parallel: usize, f: impl Fn(u64) -> Result<T, CliError> + Sync) -> Result<Vec<T>, CliError> {
    let workers = parallel.clamp(1, seeds.len().max(1));
    if workers == 1 {
        return seeds.iter().map(|&s| f(s)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T, CliError>>>> = Mutex::new((0..seeds.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= seeds.len() {
                    break;
                }
                let r = f(seeds[i]);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("no worker panicked").into_iter().map(|r| r.expect("every seed ran")).collect()
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 { (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (m, sd)
}

/// Data and pretrained weights of a seed, loaded from `opts.from` when
/// given, otherwise recomputed.
fn pretrained(cfg: &ResolvedConfig, seed: u64, opts: &RunOptions) -> Result<(SeedData, VaeParams), CliError> {
    match &opts.from {
        Some(dir) => {
            let d = seed_dir(dir, seed);
            let (_, labeled) = load_dataset(&d.join("labeled.lbd"))?;
            let (_, unlabeled) = load_dataset(&d.join("unlabeled.lbd"))?;
            let path = d.join("pretrain.ckpt");
            let (header, params) = load_checkpoint(&path)?;
            if header.architecture != cfg.architecture() {
                return Err(CliError::format(&path, "checkpoint architecture differs from the configured model"));
            }
            Ok((SeedData { labeled, unlabeled }, params))
        }
        None => {
            let data = experiment::generate_data(&cfg.config.task, seed);
            let (params, report) = experiment::pretrain_model(cfg, seed, &data)?;
            info!("seed {seed}: pretrained, final loss {:?}", report.epoch_losses.last());
            Ok((data, params))
        }
    }
}

/// Executes `cmd` and returns the one-line summary for stdout.
pub fn execute(cmd: Command, cfg: &ResolvedConfig, opts: &RunOptions) -> Result<String, CliError> {
    let c = &cfg.config;
    let seeds = &c.seeds;
    let conf = cfg.to_json();
    let label = cfg.label();
    let out = &opts.out;
    let line = match cmd {
        Command::Pretrain => {
            let losses = for_each_seed(seeds, opts.parallel, |seed| {
                let data = experiment::generate_data(&c.task, seed);
                let (params, report) = experiment::pretrain_model(cfg, seed, &data)?;
                let dir = seed_dir(out, seed);
                save_dataset(&dir.join("labeled.lbd"), c.task.kind, &data.labeled, seed, conf.clone())?;
                save_dataset(&dir.join("unlabeled.lbd"), c.task.kind, &data.unlabeled, seed, conf.clone())?;
                save_checkpoint(&dir.join("pretrain.ckpt"), &params, "pretrain", seed, conf.clone())?;
                let rep = json!({ "kind": "pretrain", "seed": seed, "epoch_losses": report.epoch_losses, "steps": report.steps, "config": conf });
                write_atomic(&dir.join("pretrain.json"), &output::pretty(&rep))?;
                Ok(report.epoch_losses.last().copied().unwrap_or(f64::NAN))
            })?;
            let (m, _) = mean_sd(&losses);
            format!("pretrain: {} seed(s), final loss mean {m:.4} -> {}", seeds.len(), out.display())
        }
        Command::Finetune => {
            let losses = for_each_seed(seeds, opts.parallel, |seed| {
                let (data, params) = pretrained(cfg, seed, opts)?;
                let (tuned, report) = experiment::finetune_model(cfg, seed, &params, &data)?;
                let dir = seed_dir(out, seed);
                save_checkpoint(&dir.join(format!("finetune_{label}.ckpt")), &tuned, "finetune", seed, conf.clone())?;
                let rep = json!({
                    "kind": "finetune", "baseline": label, "seed": seed, "epoch_losses": report.epoch_losses,
                    "metric_skipped": report.metric_skipped, "steps": report.steps, "config": conf,
                });
                write_atomic(&dir.join(format!("finetune_{label}.json")), &output::pretty(&rep))?;
                Ok(report.epoch_losses.last().copied().unwrap_or(f64::NAN))
            })?;
            let (m, _) = mean_sd(&losses);
            format!("finetune {label}: {} seed(s), final loss mean {m:.4} -> {}", seeds.len(), out.display())
        }
        Command::BoRun => {
            let traces = for_each_seed(seeds, opts.parallel, |seed| {
                let (data, params) = pretrained(cfg, seed, opts)?;
                let run = experiment::bo_run(cfg, &c.bo, seed, &data, params, &mut |_| {})?;
                let dir = seed_dir(out, seed);
                write_atomic(&dir.join(format!("trace_{label}.csv")), output::trace_csv(&run.trace, seed, label, &conf).as_bytes())?;
                let best = run.state.labeled.best().map(|(i, v)| (run.state.labeled.inputs[i].clone(), v));
                let rep = json!({
                    "kind": "bo_run", "baseline": label, "seed": seed,
                    "evaluations": run.state.evaluations, "retrainings": run.retrainings,
                    "visible_labels": run.visible_labels, "metric_skipped": run.metric_skipped,
                    "final_incumbent": run.state.incumbent(),
                    "best_input": best.as_ref().map(|b| &b.0),
                    "cumulative_regret": run.regret.total(),
                    "retrain_losses": run.retrain_losses,
                    "config": conf,
                });
                write_atomic(&dir.join(format!("summary_{label}.json")), &output::pretty(&rep))?;
                Ok(run.trace)
            })?;
            let summary = summarize(&traces).map_err(|e| CliError::run("bo-run summary", e))?;
            write_atomic(&out.join(format!("summary_{label}.csv")), output::summary_csv(&summary, seeds, label, &conf).as_bytes())?;
            let finals: Vec<f64> = traces.iter().filter_map(|t| t.last().map(|r| r.incumbent_f)).collect();
            let (m, sd) = mean_sd(&finals);
            format!("bo-run {label}: {} seed(s), final incumbent {m:.4} ± {sd:.4} -> {}", seeds.len(), out.display())
        }
        Command::Analyze => {
            let ratios = for_each_seed(seeds, opts.parallel, |seed| {
                let (data, params) = pretrained(cfg, seed, opts)?;
                let mut models: Vec<(String, VaeParams)> = Vec::new();
                if opts.checkpoints.is_empty() {
                    let tuned_path = opts.from.as_ref().map(|d| seed_dir(d, seed).join(format!("finetune_{label}.ckpt")));
                    let tuned = match tuned_path.filter(|p| p.exists()) {
                        Some(p) => load_checkpoint(&p)?.1,
                        None => experiment::finetune_model(cfg, seed, &params, &data)?.0,
                    };
                    models.push(("pretrained".to_owned(), params));
                    models.push((format!("finetuned_{label}"), tuned));
                } else {
                    for p in &opts.checkpoints {
                        let name = p.file_stem().map_or_else(|| "model".to_owned(), |s| s.to_string_lossy().into_owned());
                        models.push((name, load_checkpoint(p)?.1));
                    }
                }
                let dir = seed_dir(out, seed);
                let mut ratios = Vec::new();
                for (name, m) in &models {
                    let (sep, gen) = experiment::analyze_model(cfg, seed, m, &data)?;
                    write_atomic(&dir.join(format!("separation_{name}.json")), &output::pretty(&output::separation_json(&sep, name, seed, &conf)))?;
                    for (group, counts) in output::histogram_groups(&sep.histograms) {
                        let csv = output::histogram_csv(&sep.histograms, counts, group, name, seed, &conf);
                        write_atomic(&dir.join(format!("hist_{name}_{group}.csv")), csv.as_bytes())?;
                    }
                    write_atomic(
                        &dir.join(format!("generalization_{name}.json")),
                        &output::pretty(&output::generalization_json(&gen, name, seed, &conf)),
                    )?;
                    ratios.push((name.clone(), sep.inter_intra_ratio(), gen.mean));
                }
                Ok(ratios)
            })?;
            let parts: Vec<String> = (0..ratios[0].len())
                .map(|k| {
                    let r: Vec<f64> = ratios.iter().map(|s| s[k].1).collect();
                    let g: Vec<f64> = ratios.iter().map(|s| s[k].2).collect();
                    format!("{} ratio {:.3} pll {:.3}", ratios[0][k].0, mean_sd(&r).0, mean_sd(&g).0)
                })
                .collect();
            format!("analyze: {} seed(s), {} -> {}", seeds.len(), parts.join("; "), out.display())
        }
        Command::Probe => {
            let finals = for_each_seed(seeds, opts.parallel, |seed| {
                let (data, params) = pretrained(cfg, seed, opts)?;
                let (_, trace) = experiment::probe_run(cfg, seed, &data, params)?;
                let csv = output::probe_csv(&trace, seed, label, &conf);
                write_atomic(&seed_dir(out, seed).join(format!("probe_{label}.csv")), csv.as_bytes())?;
                Ok(trace.last().unwrap_or(0.0))
            })?;
            let (m, sd) = mean_sd(&finals);
            format!("probe {label}: {} seed(s), final recovery probability {m:.3} ± {sd:.3} -> {}", seeds.len(), out.display())
        }
        Command::Regret { two_thirds } => {
            if c.bo.regret_samples == 0 {
                return Err(ConfigError::new("bo.regret_samples", "must be positive for regret curves").into());
            }
            let bo = BoConfig { schedule: if two_thirds { Schedule::TwoThirds } else { c.bo.schedule }, ..c.bo.clone() };
            let schedule = match bo.schedule {
                Schedule::Fixed => "fixed",
                Schedule::TwoThirds => "two_thirds",
            };
            let averages = for_each_seed(seeds, opts.parallel, |seed| {
                let (data, params) = pretrained(cfg, seed, opts)?;
                let run = experiment::bo_run(cfg, &bo, seed, &data, params, &mut |_| {})?;
                let csv = output::regret_csv(&run.regret, seed, label, schedule, &conf);
                write_atomic(&seed_dir(out, seed).join(format!("regret_{label}_{schedule}.csv")), csv.as_bytes())?;
                Ok(run.regret.average())
            })?;
            let (m, sd) = mean_sd(&averages);
            format!(
                "regret {label} ({schedule}, q = {}): {} seed(s), Reg/B {m:.4} ± {sd:.4} -> {}",
                bo.inner_steps(),
                seeds.len(),
                out.display()
            )
        }
    };
    Ok(line)
}
