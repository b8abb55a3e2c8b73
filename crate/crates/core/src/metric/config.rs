use crate::ConfigError;

/// Which continuous-label metric loss regularises the latent space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MetricKind {
    /// `| ‖Δz‖ − |Δf| |` over pairs.
    Simple,
    /// Two-branch soft contrastive penalty over pairs.
    SoftContrastive,
    /// Squared log-ratio mismatch over triplets.
    LogRatio,
    /// Temperature-weighted soft-plus triplet loss.
    SoftTriplet,
}

impl MetricKind {
    pub fn uses_triplets(self) -> bool {
        matches!(self, MetricKind::LogRatio | MetricKind::SoftTriplet)
    }

    /// Whether tuples are formed by the `η` positive/negative partition.
    pub fn requires_partition(self) -> bool {
        matches!(self, MetricKind::SoftContrastive | MetricKind::SoftTriplet)
    }
}

/// Metric-loss hyperparameters. Objective differences are measured on
/// targets min-max normalised over the labelled set, so `eta` lives in
/// `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MetricConfig {
    pub eta: f64,
    /// Triplet margin added inside the soft-plus.
    pub rho: f64,
    pub nu: f64,
    pub norm_order: f64,
    pub kind: MetricKind,
    pub beta_metric: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { eta: 0.1, rho: 0.0, nu: 0.1, norm_order: 2.0, kind: MetricKind::SoftTriplet, beta_metric: 1.0 }
    }
}

impl MetricConfig {
    pub fn with_kind(kind: MetricKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(ConfigError::new("nu", "temperature must be positive"));
        }
        if !(self.beta_metric >= 0.0) || !self.beta_metric.is_finite() {
            return Err(ConfigError::new("beta_metric", "must be non-negative"));
        }
        if !(self.norm_order >= 1.0) || !self.norm_order.is_finite() {
            return Err(ConfigError::new("norm_order", "norm order must be at least 1"));
        }
        if !self.rho.is_finite() {
            return Err(ConfigError::new("rho", "must be finite"));
        }
        if self.kind.requires_partition() && !(self.eta > 0.0) {
            return Err(ConfigError::new("eta", "must be positive for partition-based losses"));
        }
        if self.kind == MetricKind::SoftTriplet && !(self.eta < 1.0) {
            return Err(ConfigError::new("eta", "must be below the normalised objective range (1)"));
        }
        Ok(())
    }
}

/// How per-datum retraining weights are derived from objective values.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "scheme"))]
pub enum WeightScheme {
    /// `w ∝ 1 / (kN + rank)`.
    Rank { k: f64 },
    /// `w ∝` min-max normalised value plus a small floor.
    Proportional,
    Uniform,
}

impl Default for WeightScheme {
    fn default() -> Self {
        WeightScheme::Rank { k: 1e-3 }
    }
}

impl WeightScheme {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            WeightScheme::Rank { k } if !(k > 0.0) || !k.is_finite() => {
                Err(ConfigError::new("k", "rank-weight parameter must be positive"))
            }
            _ => Ok(()),
        }
    }
}
