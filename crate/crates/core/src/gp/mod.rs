//! Exact GP surrogate over the latent space: ARD RBF kernel, marginal
//! likelihood fitting, predictions and expected-improvement acquisition.

mod acquisition;
mod fit;
mod model;

use alloc::vec::Vec;

#[allow(unused_imports)] // float methods for no_std builds
use num_traits::Float;
use rand::{seq::index, Rng};

pub use acquisition::{expected_improvement, optimize_acquisition, AcquisitionConfig, Acquisition, Bounds};
pub use fit::{fit, FitConfig};
pub use model::{log_marginal_likelihood, GpModel, LmlGradient};

use crate::diffcore::DiffError;

/// Smallest noise variance the fitter will use.
pub const NOISE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GpError {
    #[error("requested {requested} points but only {available} are available")]
    InsufficientData { requested: usize, available: usize },
    #[error("a GP needs at least {min} training points, got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("latent dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(&'static str),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// RBF hyperparameters; positive quantities are stored as logs so the
/// fitter can move freely.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GpHyperparams {
    pub log_lengthscales: Vec<f64>,
    pub log_signal_var: f64,
    pub log_noise_var: f64,
    pub mean: f64,
}

impl GpHyperparams {
    pub fn new(lengthscales: &[f64], signal_var: f64, noise_var: f64, mean: f64) -> Result<Self, GpError> {
        if lengthscales.is_empty() || lengthscales.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(GpError::InvalidHyperparameter("lengthscales must be positive"));
        }
        if !(signal_var > 0.0) || !(noise_var > 0.0) || !signal_var.is_finite() || !noise_var.is_finite() {
            return Err(GpError::InvalidHyperparameter("variances must be positive"));
        }
        if !mean.is_finite() {
            return Err(GpError::InvalidHyperparameter("mean must be finite"));
        }
        Ok(Self {
            log_lengthscales: lengthscales.iter().map(|l| l.ln()).collect(),
            log_signal_var: signal_var.ln(),
            log_noise_var: noise_var.ln(),
            mean,
        })
    }

    /// Unit lengthscales and variances, zero mean.
    pub fn unit(dim: usize) -> Self {
        Self { log_lengthscales: alloc::vec![0.0; dim], log_signal_var: 0.0, log_noise_var: 0.0, mean: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.log_lengthscales.len()
    }

    pub fn lengthscales(&self) -> Vec<f64> {
        self.log_lengthscales.iter().map(|l| l.exp()).collect()
    }

    pub fn mean_lengthscale(&self) -> f64 {
        self.lengthscales().iter().sum::<f64>() / self.dim() as f64
    }

    pub fn signal_var(&self) -> f64 {
        self.log_signal_var.exp()
    }

    pub fn noise_var(&self) -> f64 {
        self.log_noise_var.exp()
    }

    /// Flat parameter vector `[log ℓ₁..log ℓ_d, log σ_f², log σ_n², c]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.log_lengthscales.clone();
        v.extend([self.log_signal_var, self.log_noise_var, self.mean]);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let d = v.len() - 3;
        Self { log_lengthscales: v[..d].to_vec(), log_signal_var: v[d], log_noise_var: v[d + 1], mean: v[d + 2] }
    }
}

/// `σ_f² · exp(−½ Σ_d (a_d − b_d)² / ℓ_d²)`.
pub fn rbf_kernel(a: &[f64], b: &[f64], hyp: &GpHyperparams) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(&hyp.log_lengthscales)
        .map(|((x, y), ll)| {
            let d = (x - y) / ll.exp();
            d * d
        })
        .sum();
    hyp.signal_var() * (-0.5 * r2).exp()
}

/// Indices of the `n_best` highest values plus `n_rand` uniform draws from
/// the rest. Ties in the ranking keep index order.
pub fn select_training_subset<R: Rng + ?Sized>(
    values: &[f64],
    n_best: usize,
    n_rand: usize,
    rng: &mut R,
) -> Result<Vec<usize>, GpError> {
    let requested = n_best + n_rand;
    if requested > values.len() {
        return Err(GpError::InsufficientData { requested, available: values.len() });
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut out: Vec<usize> = order[..n_best].to_vec();
    let rest = &order[n_best..];
    out.extend(index::sample(rng, rest.len(), n_rand).iter().map(|k| rest[k]));
    Ok(out)
}

/// Affine standardisation `y ↦ (y − mean) / sd` of GP targets.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Standardizer {
    pub mean: f64,
    pub sd: f64,
}

impl Standardizer {
    /// Fits to `values`; a constant sample gets unit scale.
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self { mean, sd }
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.mean) / self.sd
    }

    pub fn inverse(&self, s: f64) -> f64 {
        s * self.sd + self.mean
    }

    pub fn forward_all(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.forward(y)).collect()
    }
}
