//! Experiment configuration: one TOML or JSON file per experiment.
//!
//! Every section defaults to the reference settings, so a config only
//! spells out what it changes. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use latent_bo_core::{
    analysis::{GeneralizationConfig, ProbeConfig},
    boloop::{Baseline, BaselineName, BoConfig},
    metric::MetricConfig,
    tasks::TaskSpec,
    vae::{Activation, Architecture, TrainConfig},
    ConfigError,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Label fraction of the 1%-label baselines.
pub const SEMI_LABEL_FRACTION: f64 = 0.01;

/// Encoder/decoder widths; the likelihood follows from the task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: vec![128], latent_dim: 2, activation: Activation::Tanh }
    }
}

/// Contents of an experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    /// Baseline name, including the 1%-label variants (`st-lbo`, ...).
    pub baseline: String,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    /// Settings of every retraining (and of the `finetune` subcommand).
    pub train: TrainConfig,
    pub bo: BoConfig,
    pub metric: MetricConfig,
    pub probe: ProbeConfig,
    pub analysis: GeneralizationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskSpec::default(),
            baseline: Baseline::TLbo.name().to_owned(),
            seeds: Vec::new(),
            out: PathBuf::from("runs"),
            model: ModelConfig::default(),
            pretrain: TrainConfig::pretrain_default(),
            train: TrainConfig::default(),
            bo: BoConfig::default(),
            metric: MetricConfig::default(),
            probe: ProbeConfig::default(),
            analysis: GeneralizationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML, or JSON when the path ends in `.json`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, is_json)
    }

    pub fn parse(text: &str, json: bool) -> Result<Self, CliError> {
        if json {
            serde_json::from_str(text).map_err(|e| CliError::Config(parse_error(&e.to_string())))
        } else {
            toml::from_str(text).map_err(|e| CliError::Config(parse_error(e.message())))
        }
    }

    /// Applies the baseline name, checks every section and fixes the seed
    /// list. `seed` replaces the configured seeds.
    pub fn resolve(mut self, seed: Option<u64>) -> Result<ResolvedConfig, ConfigError> {
        let name: BaselineName = self.baseline.parse()?;
        self.bo.baseline = name.baseline;
        if name.semi_supervised {
            self.bo.label_fraction = SEMI_LABEL_FRACTION;
            self.bo.include_unlabeled = true;
        }
        if let Some(s) = seed {
            self.seeds = vec![s];
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::new("seed", "no seed given: pass --seed or set `seeds`"));
        }
        self.validate()?;
        Ok(ResolvedConfig { name, config: self })
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.task.labeled_size < 4 {
            return Err(ConfigError::new("task.labeled_size", "must be at least 4"));
        }
        if self.task.unlabeled_size == 0 {
            return Err(ConfigError::new("task.unlabeled_size", "must be at least 1"));
        }
        let arch = architecture(&self.task, &self.model);
        arch.validate().map_err(|e| ConfigError::new("model", e.to_string()))?;
        self.pretrain.validate().map_err(|e| e.within("pretrain"))?;
        self.train.validate().map_err(|e| e.within("train"))?;
        self.bo.validate().map_err(|e| e.within("bo"))?;
        if self.bo.baseline.metric_kind().is_some() {
            let kind = self.bo.baseline.metric_kind().expect("metric baseline");
            MetricConfig { kind, ..self.metric }.validate().map_err(|e| e.within("metric"))?;
        }
        if !self.probe.alpha.is_finite() {
            return Err(ConfigError::new("probe.alpha", "must be finite"));
        }
        if self.probe.samples == 0 {
            return Err(ConfigError::new("probe.samples", "must be at least 1"));
        }
        if self.probe.candidate_cap == 0 {
            return Err(ConfigError::new("probe.candidate_cap", "must be at least 1"));
        }
        if self.analysis.splits == 0 {
            return Err(ConfigError::new("analysis.splits", "must be at least 1"));
        }
        if !(self.analysis.train_fraction > 0.0 && self.analysis.train_fraction < 1.0) {
            return Err(ConfigError::new("analysis.train_fraction", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Turns a serde message such as "unknown field `foo`, expected ..." into a
/// field-level error.
fn parse_error(msg: &str) -> ConfigError {
    let field = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.contains("field") || msg.contains("variant"))
        .unwrap_or("config")
        .to_owned();
    ConfigError::new(field, msg.trim().to_owned())
}

/// Decoder architecture for a task. The target head is always present so
/// one pretrained checkpoint serves every baseline; objectives without a
/// prediction term leave it untouched.
pub fn architecture(task: &TaskSpec, model: &ModelConfig) -> Architecture {
    Architecture {
        likelihood: task.kind.likelihood(),
        hidden: model.hidden.clone(),
        latent_dim: model.latent_dim,
        activation: model.activation,
        target_head: true,
    }
}

/// A validated config with its baseline resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub name: BaselineName,
    pub config: ExperimentConfig,
}

impl ResolvedConfig {
    /// Canonical baseline label, e.g. `t-lbo` or `st-lbo`.
    pub fn label(&self) -> &'static str {
        if !self.name.semi_supervised {
            return self.name.baseline.name();
        }
        match self.name.baseline {
            Baseline::Lbo => "slbo",
            Baseline::TpLbo => "sr-lbo",
            Baseline::SLbo => "ss-lbo",
            Baseline::CLbo => "sc-lbo",
            Baseline::LrLbo => "slr-lbo",
            Baseline::TLbo => "st-lbo",
        }
    }

    pub fn architecture(&self) -> Architecture {
        architecture(&self.config.task, &self.config.model)
    }

    /// The config as embedded in every output file. The output directory
    /// is left out so that files do not depend on where they were written.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(&self.config).expect("config serialises");
        if let Some(m) = v.as_object_mut() {
            m.remove("out");
        }
        v
    }
}
