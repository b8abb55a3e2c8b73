//! The optimise/retrain loop: weighted VAE retraining with the baseline's
//! ELBO, a GP over latent means, EI acquisitions with novelty enforcement,
//! and regret accounting.

mod regret;
mod run;

use core::{fmt, str::FromStr};

#[allow(unused_imports)] // float methods for no_std builds
use num_traits::Float;

pub use regret::{cumulative_regret, expected_objective, Generator, RegretCurve};
pub use run::{acquire_step, build_latent_dataset, run, run_with_hook, Acquired, BoState, RetrainEvent, RunInputs, RunOutput, TraceRecord};

use crate::{
    gp::{AcquisitionConfig, FitConfig, GpError},
    metric::{MetricConfig, MetricError, MetricKind, WeightScheme},
    vae::{FinetuneSpec, LabelObjective, VaeError},
    ConfigError,
};

/// ELBO variant used during retraining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Baseline {
    /// Weighted retraining only.
    #[cfg_attr(feature = "serde", serde(rename = "lbo"))]
    Lbo,
    /// Weighted retraining plus target prediction.
    #[cfg_attr(feature = "serde", serde(rename = "tp-lbo"))]
    TpLbo,
    /// Simple (L1-style) metric loss.
    #[cfg_attr(feature = "serde", serde(rename = "s-lbo"))]
    SLbo,
    /// Soft contrastive metric loss.
    #[cfg_attr(feature = "serde", serde(rename = "c-lbo"))]
    CLbo,
    /// Log-ratio metric loss.
    #[cfg_attr(feature = "serde", serde(rename = "lr-lbo"))]
    LrLbo,
    /// Soft triplet metric loss.
    #[cfg_attr(feature = "serde", serde(rename = "t-lbo"))]
    TLbo,
}

impl Baseline {
    pub const ALL: [Baseline; 6] =
        [Baseline::Lbo, Baseline::TpLbo, Baseline::SLbo, Baseline::CLbo, Baseline::LrLbo, Baseline::TLbo];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Lbo => "lbo",
            Baseline::TpLbo => "tp-lbo",
            Baseline::SLbo => "s-lbo",
            Baseline::CLbo => "c-lbo",
            Baseline::LrLbo => "lr-lbo",
            Baseline::TLbo => "t-lbo",
        }
    }

    pub fn metric_kind(self) -> Option<MetricKind> {
        match self {
            Baseline::Lbo | Baseline::TpLbo => None,
            Baseline::SLbo => Some(MetricKind::Simple),
            Baseline::CLbo => Some(MetricKind::SoftContrastive),
            Baseline::LrLbo => Some(MetricKind::LogRatio),
            Baseline::TLbo => Some(MetricKind::SoftTriplet),
        }
    }

    pub fn needs_target_head(self) -> bool {
        self == Baseline::TpLbo
    }

    /// Retraining objective; the metric kind overrides `metric.kind`.
    pub fn objective(self, metric: &MetricConfig) -> LabelObjective {
        match self {
            Baseline::Lbo => LabelObjective::Label,
            Baseline::TpLbo => LabelObjective::LabelTp,
            _ => LabelObjective::LabelMetric(MetricConfig { kind: self.metric_kind().expect("metric baseline"), ..*metric }),
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A parsed baseline name: the ELBO variant plus whether it is one of the
/// 1%-label variants (`slbo`, `sr-lbo`, `sc-lbo`, `st-lbo`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineName {
    pub baseline: Baseline,
    pub semi_supervised: bool,
}

impl FromStr for BaselineName {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let full = |b| Ok(BaselineName { baseline: b, semi_supervised: false });
        let semi = |b| Ok(BaselineName { baseline: b, semi_supervised: true });
        match lower.as_str() {
            "lbo" => full(Baseline::Lbo),
            "tp-lbo" | "r-lbo" => full(Baseline::TpLbo),
            "s-lbo" => full(Baseline::SLbo),
            "c-lbo" => full(Baseline::CLbo),
            "lr-lbo" => full(Baseline::LrLbo),
            "t-lbo" => full(Baseline::TLbo),
            "slbo" => semi(Baseline::Lbo),
            "sr-lbo" | "stp-lbo" => semi(Baseline::TpLbo),
            "ss-lbo" => semi(Baseline::SLbo),
            "sc-lbo" => semi(Baseline::CLbo),
            "slr-lbo" => semi(Baseline::LrLbo),
            "st-lbo" => semi(Baseline::TLbo),
            _ => Err(ConfigError::new(
                "baseline",
                alloc::format!(
                    "unknown baseline `{s}` (expected one of lbo, tp-lbo, s-lbo, c-lbo, lr-lbo, t-lbo or a 1%-label variant slbo, sr-lbo, ss-lbo, sc-lbo, slr-lbo, st-lbo)"
                ),
            )),
        }
    }
}

impl FromStr for Baseline {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parsed: BaselineName = s.parse()?;
        if parsed.semi_supervised {
            return Err(ConfigError::new("baseline", alloc::format!("`{s}` names a 1%-label variant")));
        }
        Ok(parsed.baseline)
    }
}

/// How the budget is split between retrainings and acquisitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Schedule {
    /// `q = retrain_every`.
    #[default]
    Fixed,
    /// `q = ⌈B^{2/3}⌉`, the split that gives sublinear regret.
    TwoThirds,
}

/// Budget, schedule and surrogate settings of one run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct BoConfig {
    /// Total black-box evaluations `B`.
    pub budget: usize,
    /// Acquisitions per retraining `q`.
    pub retrain_every: usize,
    pub schedule: Schedule,
    /// Stop an inner loop once the acquired EI falls below this.
    pub tau: f64,
    pub weights: WeightScheme,
    /// Fraction of the initial labelled set that is visible (1.0 or 0.01).
    pub label_fraction: f64,
    pub baseline: Baseline,
    /// Add the unlabelled ELBO to the retraining objective.
    pub include_unlabeled: bool,
    pub gp_n_best: usize,
    pub gp_n_rand: usize,
    pub fit: FitConfig,
    pub acquisition: AcquisitionConfig,
    /// Duplicate decodes are re-decoded from `ẑ + N(0, (perturb_scale·ℓ̄)²)`.
    pub perturb_scale: f64,
    pub perturb_attempts: usize,
    /// Consecutive duplicate decodes before the run aborts.
    pub max_duplicates: usize,
    /// Decoder samples per acquisition for the regret trace (0 disables).
    pub regret_samples: usize,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            budget: 200,
            retrain_every: 50,
            schedule: Schedule::Fixed,
            tau: 1e-4,
            weights: WeightScheme::default(),
            label_fraction: 1.0,
            baseline: Baseline::TLbo,
            include_unlabeled: false,
            gp_n_best: 256,
            gp_n_rand: 64,
            fit: FitConfig::default(),
            acquisition: AcquisitionConfig::default(),
            perturb_scale: 0.1,
            perturb_attempts: 10,
            max_duplicates: 100,
            regret_samples: 32,
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.budget == 0 {
            return Err(ConfigError::new("budget", "must be at least 1"));
        }
        if self.schedule == Schedule::Fixed && !(1..=self.budget).contains(&self.retrain_every) {
            return Err(ConfigError::new("retrain_every", "must satisfy 1 <= q <= budget"));
        }
        if !(self.tau > 0.0) {
            return Err(ConfigError::new("tau", "must be positive"));
        }
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return Err(ConfigError::new("label_fraction", "must lie in (0, 1]"));
        }
        if self.gp_n_best + self.gp_n_rand < 2 {
            return Err(ConfigError::new("gp_n_best", "GP subset must hold at least 2 points"));
        }
        if self.acquisition.starts == 0 {
            return Err(ConfigError::new("acquisition.starts", "must be at least 1"));
        }
        if !(self.perturb_scale > 0.0) {
            return Err(ConfigError::new("perturb_scale", "must be positive"));
        }
        if self.max_duplicates == 0 {
            return Err(ConfigError::new("max_duplicates", "must be at least 1"));
        }
        self.weights.validate()
    }

    /// Acquisitions per retraining under the configured schedule.
    pub fn inner_steps(&self) -> usize {
        match self.schedule {
            Schedule::Fixed => self.retrain_every,
            Schedule::TwoThirds => ((self.budget as f64).powf(2.0 / 3.0) - 1e-9).ceil().max(1.0) as usize,
        }
    }

    /// Number of retrainings `L = ⌈B/q⌉`.
    pub fn outer_steps(&self) -> usize {
        self.budget.div_ceil(self.inner_steps())
    }

    /// Visible initial labels out of `n`: `⌈label_fraction·n⌉`.
    pub fn visible_labels(&self, n: usize) -> usize {
        ((self.label_fraction * n as f64) - 1e-9).ceil().max(1.0).min(n as f64) as usize
    }

    pub fn finetune_spec(&self, metric: &MetricConfig) -> FinetuneSpec {
        FinetuneSpec {
            objective: self.baseline.objective(metric),
            weights: self.weights,
            include_unlabeled: self.include_unlabeled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("the labelled set is empty")]
    NoLabels,
    #[error("vae failure at step {step}: {source}")]
    Vae { step: usize, source: VaeError },
    #[error("gp failure at step {step}: {source}")]
    Gp { step: usize, source: GpError },
    #[error("metric failure at step {step}: {source}")]
    Metric { step: usize, source: MetricError },
    #[error("{attempts} consecutive duplicate decodes at step {step}")]
    Duplicates { step: usize, attempts: usize },
}

pub(crate) fn vae_at(step: usize) -> impl Fn(VaeError) -> BoError {
    move |source| BoError::Vae { step, source }
}

pub(crate) fn gp_at(step: usize) -> impl Fn(GpError) -> BoError {
    move |source| BoError::Gp { step, source }
}
