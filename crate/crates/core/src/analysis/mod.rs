//! Diagnostics: latent separation of good and bad points, GP
//! generalisation on held-out latents, the domain-recovery probe and
//! seed-aggregated traces.

mod probe;

use alloc::{vec, vec::Vec};

#[allow(unused_imports)] // float methods for no_std builds
use num_traits::Float;
use rand::{seq::SliceRandom, Rng};

pub use probe::{recovery_probability, DomainRecoveryProbe, ProbeConfig, RecoveryStep, RecoveryTrace};

use crate::{
    boloop::{build_latent_dataset, TraceRecord},
    diffcore::Tensor,
    gp::{fit, FitConfig, GpError, Standardizer},
    tasks::Dataset,
    vae::{VaeError, VaeParams},
};

pub const HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("need at least {min} points, got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("no traces to summarise")]
    NoTraces,
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error(transparent)]
    Gp(#[from] GpError),
}

/// Equal-width histograms of the three distance populations over their
/// pooled range.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Histograms {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub high_high: Vec<usize>,
    pub low_low: Vec<usize>,
    pub high_low: Vec<usize>,
}

/// Pairwise latent distances within and across the high/low halves of `D_L`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeparationReport {
    pub high_high: Vec<f64>,
    pub low_low: Vec<f64>,
    pub high_low: Vec<f64>,
    pub mean_high_high: f64,
    pub mean_low_low: f64,
    pub mean_high_low: f64,
    pub histograms: Histograms,
    /// All objective values were equal, so the split fell back to index order.
    pub degenerate: bool,
}

impl SeparationReport {
    /// `mean(high↔low) / max(mean(high↔high), mean(low↔low))`.
    pub fn inter_intra_ratio(&self) -> f64 {
        self.mean_high_low / self.mean_high_high.max(self.mean_low_low)
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn histogram(values: &[f64], lo: f64, width: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

/// Separation statistics for precomputed latent codes and values. The top
/// `⌊N/2⌋` values form the high half (stable order on ties).
pub fn separation_from_latents(latent: &[Vec<f64>], values: &[f64]) -> Result<SeparationReport, AnalysisError> {
    let n = values.len();
    if n < 4 {
        return Err(AnalysisError::TooFewPoints { min: 4, got: n });
    }
    let degenerate = values.iter().all(|&v| v == values[0]);
    let mut order: Vec<usize> = (0..n).collect();
    if !degenerate {
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    }
    let (high, low) = order.split_at(n / 2);
    let within = |g: &[usize]| -> Vec<f64> {
        let mut d = Vec::with_capacity(g.len() * g.len().saturating_sub(1) / 2);
        for (k, &i) in g.iter().enumerate() {
            for &j in &g[k + 1..] {
                d.push(l2(&latent[i], &latent[j]));
            }
        }
        d
    };
    let high_high = within(high);
    let low_low = within(low);
    let high_low: Vec<f64> = high.iter().flat_map(|&i| low.iter().map(move |&j| (i, j))).map(|(i, j)| l2(&latent[i], &latent[j])).collect();
    let all = high_high.iter().chain(&low_low).chain(&high_low);
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let hi = if hi > lo { hi } else { lo + 1.0 };
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let edges = (0..=HISTOGRAM_BINS).map(|k| if k == HISTOGRAM_BINS { hi } else { lo + width * k as f64 }).collect();
    let histograms = Histograms {
        edges,
        high_high: histogram(&high_high, lo, width, HISTOGRAM_BINS),
        low_low: histogram(&low_low, lo, width, HISTOGRAM_BINS),
        high_low: histogram(&high_low, lo, width, HISTOGRAM_BINS),
    };
    Ok(SeparationReport {
        mean_high_high: mean(&high_high),
        mean_low_low: mean(&low_low),
        mean_high_low: mean(&high_low),
        high_high,
        low_low,
        high_low,
        histograms,
        degenerate,
    })
}

/// Encodes `D_L` to posterior means and reports latent separation.
pub fn separation_report(params: &VaeParams, data: &Dataset) -> Result<SeparationReport, AnalysisError> {
    if data.len() < 4 {
        return Err(AnalysisError::TooFewPoints { min: 4, got: data.len() });
    }
    let latent = build_latent_dataset(params, &data.inputs)?;
    separation_from_latents(&latent, &data.values)
}

/// Settings of the held-out GP likelihood protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GeneralizationConfig {
    pub splits: usize,
    pub train_fraction: f64,
    pub fit: FitConfig,
    /// Evaluate on the training points instead of the held-out ones.
    pub in_sample: bool,
}

impl Default for GeneralizationConfig {
    fn default() -> Self {
        Self { splits: 5, train_fraction: 0.8, fit: FitConfig::default(), in_sample: false }
    }
}

/// Held-out GP predictive log-likelihood per split with mean and sample
/// standard deviation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Generalization {
    pub per_split: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    /// Training-set indices of each split.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub train_indices: Vec<Vec<usize>>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}

/// Random train/test splits of latent codes; a GP is fitted on each
/// training part (targets standardised with training statistics) and
/// scored on the rest.
pub fn gp_generalization_from_latents<R: Rng + ?Sized>(
    latent: &[Vec<f64>],
    values: &[f64],
    cfg: &GeneralizationConfig,
    rng: &mut R,
) -> Result<Generalization, AnalysisError> {
    let n = values.len();
    let n_train = ((n as f64) * cfg.train_fraction).round() as usize;
    if n_train < 2 || (!cfg.in_sample && n_train >= n) {
        return Err(AnalysisError::TooFewPoints { min: 3, got: n });
    }
    let mut per_split = Vec::with_capacity(cfg.splits);
    let mut train_indices = Vec::with_capacity(cfg.splits);
    for _ in 0..cfg.splits {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let (train, test) = idx.split_at(n_train);
        let test = if cfg.in_sample { train } else { test };
        let st = Standardizer::fit(&train.iter().map(|&i| values[i]).collect::<Vec<_>>());
        let rows = |ix: &[usize]| -> Result<Tensor, AnalysisError> {
            let r: Vec<&[f64]> = ix.iter().map(|&i| latent[i].as_slice()).collect();
            Tensor::from_rows(&r).map_err(|e| AnalysisError::Gp(e.into()))
        };
        let ytr: Vec<f64> = train.iter().map(|&i| st.forward(values[i])).collect();
        let yte: Vec<f64> = test.iter().map(|&i| st.forward(values[i])).collect();
        let model = fit(rows(train)?, ytr, &cfg.fit, rng)?;
        per_split.push(model.predictive_log_likelihood(&rows(test)?, &yte)?);
        train_indices.push(train.to_vec());
    }
    let (mean, sd) = mean_sd(&per_split);
    Ok(Generalization { per_split, mean, sd, train_indices })
}

/// [`gp_generalization_from_latents`] on the encoder means of `D_L`.
pub fn gp_generalization<R: Rng + ?Sized>(
    params: &VaeParams,
    data: &Dataset,
    cfg: &GeneralizationConfig,
    rng: &mut R,
) -> Result<Generalization, AnalysisError> {
    let latent = build_latent_dataset(params, &data.inputs)?;
    gp_generalization_from_latents(&latent, &data.values, cfg, rng)
}

/// Per-step statistics across seeds.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SummaryRow {
    pub step: usize,
    pub incumbent_mean: f64,
    pub incumbent_sd: f64,
    pub cum_regret_mean: f64,
    pub cum_regret_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub traces: usize,
    /// Traces had different lengths and were cut to the shortest.
    pub truncated: bool,
}

/// Aligns traces by step and reports mean and sample standard deviation
/// of the incumbent and cumulative regret.
pub fn summarize(traces: &[Vec<TraceRecord>]) -> Result<Summary, AnalysisError> {
    if traces.is_empty() {
        return Err(AnalysisError::NoTraces);
    }
    let len = traces.iter().map(Vec::len).min().unwrap_or(0);
    let truncated = traces.iter().any(|t| t.len() != len);
    let rows = (0..len)
        .map(|s| {
            let inc: Vec<f64> = traces.iter().map(|t| t[s].incumbent_f).collect();
            let reg: Vec<f64> = traces.iter().map(|t| t[s].cum_regret).collect();
            let (im, isd) = mean_sd(&inc);
            let (rm, rsd) = mean_sd(&reg);
            SummaryRow { step: traces[0][s].step, incumbent_mean: im, incumbent_sd: isd, cum_regret_mean: rm, cum_regret_sd: rsd }
        })
        .collect();
    Ok(Summary { rows, traces: traces.len(), truncated })
}
