use std::{path::PathBuf, process::ExitCode};

use clap::{Args, Parser, Subcommand};
use latent_bo::{execute, CliError, Command, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "latent-bo", version, about = "Metric-regularised latent-space Bayesian optimisation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Pretrain the VAE and write the checkpoint and datasets.
    Pretrain(Common),
    /// Fine-tune a pretrained model once with the baseline's objective.
    Finetune(Common),
    /// Run the optimise/retrain loop and write per-step traces.
    BoRun(Common),
    /// Latent separation and GP generalisation reports.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to analyse (repeatable); defaults to the pretrained
        /// and fine-tuned models of each seed.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
    },
    /// Domain-recovery probe across retrainings.
    Probe(Common),
    /// Regret curve of a BO run.
    Regret {
        #[command(flatten)]
        common: Common,
        /// Use q = ceil(B^(2/3)) acquisitions per retraining.
        #[arg(long)]
        two_thirds: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML, or JSON by extension).
    #[arg(long)]
    config: PathBuf,
    /// Run this seed only, replacing the configured seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent seeds.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Baseline name (overrides `baseline` in the config).
    #[arg(long)]
    baseline: Option<String>,
    /// Directory of a previous `pretrain` run to load data and weights from.
    #[arg(long)]
    from: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<String, CliError> {
    let (cmd, common, checkpoints) = match cli.command {
        Sub::Pretrain(c) => (Command::Pretrain, c, Vec::new()),
        Sub::Finetune(c) => (Command::Finetune, c, Vec::new()),
        Sub::BoRun(c) => (Command::BoRun, c, Vec::new()),
        Sub::Analyze { common, checkpoints } => (Command::Analyze, common, checkpoints),
        Sub::Probe(c) => (Command::Probe, c, Vec::new()),
        Sub::Regret { common, two_thirds } => (Command::Regret { two_thirds }, common, Vec::new()),
    };
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(b) = common.baseline {
        config.baseline = b;
    }
    if let Some(o) = common.out {
        config.out = o;
    }
    let resolved = config.resolve(common.seed)?;
    let opts = RunOptions { out: resolved.config.out.clone(), parallel: common.parallel, from: common.from, checkpoints };
    log::info!("{}: baseline {}, seeds {:?}", cmd.name(), resolved.label(), resolved.config.seeds);
    execute(cmd, &resolved, &opts)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LATENT_BO_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.exit_code();
            match &e {
                CliError::Config(_) => eprintln!("config error: {e}"),
                _ => eprintln!("error: {e}"),
            }
            ExitCode::from(code as u8)
        }
    }
}
