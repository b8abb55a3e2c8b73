//! Continuous-label deep metric learning: positive/negative partitioning,
//! the four metric losses, retraining weights and tuple sampling.

mod config;
mod loss;

use alloc::{collections::BTreeSet, vec::Vec};

use rand::{seq::index, Rng};

pub use config::{MetricConfig, MetricKind, WeightScheme};
pub use loss::{
    log_ratio_loss, simple_loss, soft_contrastive_from_distances, soft_contrastive_loss, soft_triplet_loss,
    soft_triplet_weights, LOG_RATIO_EPS,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("labelled set is empty")]
    EmptyData,
    #[error("non-finite input to a metric loss")]
    NonFinite,
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error("proximity threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("latent dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("rank-weight parameter must be positive, got {0}")]
    InvalidRankParameter(f64),
    #[error("no valid {what} exists at eta = {eta}")]
    NoValidTuple { what: &'static str, eta: f64 },
    #[error("batch of {requested} exceeds the {available} valid tuples")]
    BatchTooLarge { requested: usize, available: usize },
}

/// Indices of the points whose objective value lies within `eta` of the
/// anchor (positives) and the rest (negatives). The anchor is in neither.
pub fn partition(anchor: usize, values: &[f64], eta: f64) -> Result<(Vec<usize>, Vec<usize>), MetricError> {
    if values.is_empty() {
        return Err(MetricError::EmptyData);
    }
    if !(eta > 0.0) {
        return Err(MetricError::InvalidThreshold(eta));
    }
    let fa = values[anchor];
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (i, &f) in values.iter().enumerate() {
        if i == anchor {
            continue;
        }
        if (fa - f).abs() < eta {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    Ok((pos, neg))
}

/// Min-max normalisation to `[0, 1]`; a constant input maps to zeros.
pub fn normalize_values(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        return alloc::vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / range).collect()
}

/// Rank weights `w_i ∝ 1/(k·N + rank_i)`, where rank 0 is the largest
/// value and tied values share the mean of their ranks. Sums to one.
pub fn rank_weights(values: &[f64], k: f64) -> Result<Vec<f64>, MetricError> {
    if values.is_empty() {
        return Err(MetricError::EmptyData);
    }
    if !(k > 0.0) || !k.is_finite() {
        return Err(MetricError::InvalidRankParameter(k));
    }
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut ranks = alloc::vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let mean_rank = (start + end - 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mean_rank;
        }
        start = end;
    }
    let kn = k * n as f64;
    let raw: Vec<f64> = ranks.iter().map(|r| 1.0 / (kn + r)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Per-datum weights under `scheme`, summing to one.
pub fn weights(values: &[f64], scheme: WeightScheme) -> Result<Vec<f64>, MetricError> {
    if values.is_empty() {
        return Err(MetricError::EmptyData);
    }
    let n = values.len() as f64;
    match scheme {
        WeightScheme::Rank { k } => rank_weights(values, k),
        WeightScheme::Uniform => Ok(alloc::vec![1.0 / n; values.len()]),
        WeightScheme::Proportional => {
            let raw: Vec<f64> = normalize_values(values).into_iter().map(|v| v + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            Ok(raw.into_iter().map(|w| w / total).collect())
        }
    }
}

/// Weight of a pair: `w(x_i)·w(x_j)`.
pub fn pair_weight(w: &[f64], (i, j): (usize, usize)) -> f64 {
    w[i] * w[j]
}

/// Weight of a triplet: `w(x_i)·w(x_j)·w(x_k)`.
pub fn triplet_weight(w: &[f64], (i, j, k): (usize, usize, usize)) -> f64 {
    w[i] * w[j] * w[k]
}

/// Tuples of indices drawn for one metric-loss evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TupleBatch {
    Pairs(Vec<(usize, usize)>),
    /// `(anchor, positive, negative)`; for the log-ratio loss the last two
    /// are simply the two comparison points.
    Triplets(Vec<(usize, usize, usize)>),
}

impl TupleBatch {
    pub fn len(&self) -> usize {
        match self {
            TupleBatch::Pairs(p) => p.len(),
            TupleBatch::Triplets(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Composite weight of every tuple, in order.
    pub fn weights(&self, w: &[f64]) -> Vec<f64> {
        match self {
            TupleBatch::Pairs(p) => p.iter().map(|&t| pair_weight(w, t)).collect(),
            TupleBatch::Triplets(t) => t.iter().map(|&t| triplet_weight(w, t)).collect(),
        }
    }
}

fn decode_pair(mut k: usize, n: usize) -> (usize, usize) {
    for i in 0..n {
        let row = n - 1 - i;
        if k < row {
            return (i, i + 1 + k);
        }
        k -= row;
    }
    unreachable!("pair index out of range")
}

/// Draws `batch_size` distinct valid tuples for `cfg.kind` from the
/// (normalised) objective values.
///
/// Pairs are sampled uniformly among all unordered pairs. Soft-triplet
/// tuples sample anchors first and then one positive and one negative per
/// anchor; log-ratio tuples use any three distinct points.
pub fn sample_minibatch<R: Rng + ?Sized>(
    values: &[f64],
    cfg: &MetricConfig,
    batch_size: usize,
    rng: &mut R,
) -> Result<TupleBatch, MetricError> {
    let n = values.len();
    if n == 0 {
        return Err(MetricError::EmptyData);
    }
    match cfg.kind {
        MetricKind::Simple | MetricKind::SoftContrastive => {
            let total = n * (n - 1) / 2;
            if total == 0 {
                return Err(MetricError::NoValidTuple { what: "pair", eta: cfg.eta });
            }
            if batch_size > total {
                return Err(MetricError::BatchTooLarge { requested: batch_size, available: total });
            }
            let picks = index::sample(rng, total, batch_size);
            Ok(TupleBatch::Pairs(picks.iter().map(|k| decode_pair(k, n)).collect()))
        }
        MetricKind::SoftTriplet => sample_partition_triplets(values, cfg.eta, batch_size, rng),
        MetricKind::LogRatio => {
            let total = n.saturating_mul(n.saturating_sub(1)).saturating_mul(n.saturating_sub(2));
            if total == 0 {
                return Err(MetricError::NoValidTuple { what: "triplet", eta: cfg.eta });
            }
            if batch_size > total {
                return Err(MetricError::BatchTooLarge { requested: batch_size, available: total });
            }
            let mut seen = BTreeSet::new();
            let mut out = Vec::with_capacity(batch_size);
            while out.len() < batch_size {
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                let k = rng.random_range(0..n);
                if i == j || i == k || j == k {
                    continue;
                }
                if seen.insert((i, j, k)) {
                    out.push((i, j, k));
                }
            }
            Ok(TupleBatch::Triplets(out))
        }
    }
}

fn sample_partition_triplets<R: Rng + ?Sized>(
    values: &[f64],
    eta: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<TupleBatch, MetricError> {
    let n = values.len();
    let mut eligible = Vec::new();
    let mut parts = Vec::new();
    let mut total = 0usize;
    for a in 0..n {
        let (pos, neg) = partition(a, values, eta)?;
        if !pos.is_empty() && !neg.is_empty() {
            total = total.saturating_add(pos.len() * neg.len());
            eligible.push(a);
            parts.push((pos, neg));
        }
    }
    if eligible.is_empty() {
        return Err(MetricError::NoValidTuple { what: "triplet", eta });
    }
    if batch_size > total {
        return Err(MetricError::BatchTooLarge { requested: batch_size, available: total });
    }
    let mut order: Vec<usize> = (0..eligible.len()).collect();
    // Anchors first: a uniform permutation, cycled when the batch is larger
    // than the number of eligible anchors.
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(batch_size);
    let mut cursor = 0usize;
    while out.len() < batch_size {
        let slot = order[cursor % order.len()];
        cursor += 1;
        let (pos, neg) = &parts[slot];
        for _ in 0..64 {
            let t = (eligible[slot], pos[rng.random_range(0..pos.len())], neg[rng.random_range(0..neg.len())]);
            if seen.insert(t) {
                out.push(t);
                break;
            }
        }
    }
    Ok(TupleBatch::Triplets(out))
}
