use alloc::string::String;
use core::fmt;

use crate::{analysis::AnalysisError, boloop::BoError, diffcore::DiffError, gp::GpError, metric::MetricError, vae::VaeError};

/// A configuration value that violates a module precondition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }

    /// Prefixes the field path, e.g. `eta` -> `metric.eta`.
    pub fn within(mut self, section: &str) -> Self {
        self.field = alloc::format!("{section}.{}", self.field);
        self
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid `{}`: {}", self.field, self.message)
    }
}

impl core::error::Error for ConfigError {}

/// Crate-level error.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("diffcore: {0}")]
    Diff(#[from] DiffError),
    #[error("metric: {0}")]
    Metric(#[from] MetricError),
    #[error("vae: {0}")]
    Vae(#[from] VaeError),
    #[error("gp: {0}")]
    Gp(#[from] GpError),
    #[error("boloop: {0}")]
    Bo(#[from] BoError),
    #[error("analysis: {0}")]
    Analysis(#[from] AnalysisError),
}
