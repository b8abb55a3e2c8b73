//! Scalar metric losses on latent codes and normalised objective values.
//!
//! These are the reference evaluations; training builds the same formulas
//! on the tape in [`crate::vae`] (see `vae::elbo`).

#[allow(unused_imports)] // float methods for no_std builds
use num_traits::Float;

use super::{MetricConfig, MetricError};
use crate::{diffcore::norm_p, math};

/// Guard added to every log-ratio numerator and denominator.
pub const LOG_RATIO_EPS: f64 = 1e-9;

fn check(values: &[f64]) -> Result<(), MetricError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MetricError::NonFinite)
    }
}

fn distance(a: &[f64], b: &[f64], p: f64) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::DimensionMismatch { left: a.len(), right: b.len() });
    }
    check(a)?;
    check(b)?;
    let diff: alloc::vec::Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Ok(norm_p(&diff, p))
}

/// Positive and negative weights `(w⁽ᵖ⁾, w⁽ⁿ⁾)` of a soft triplet; `None`
/// when the triplet is not valid for `cfg.eta`.
pub fn soft_triplet_weights(f_i: f64, f_j: f64, f_k: f64, cfg: &MetricConfig) -> Option<(f64, f64)> {
    let (dp, dn) = ((f_i - f_j).abs(), (f_i - f_k).abs());
    if !(dp < cfg.eta && dn >= cfg.eta) {
        return None;
    }
    let f_nu = |a: f64| (a / (2.0 * cfg.nu)).tanh();
    let wp = f_nu(cfg.eta - dp) / f_nu(cfg.eta);
    let wn = f_nu(dn - cfg.eta) / f_nu(1.0 - cfg.eta);
    Some((wp, wn))
}

/// Soft triplet loss `softplus(Δ⁺ − Δ⁻ + ρ) · w⁽ᵖ⁾ · w⁽ⁿ⁾`; zero for
/// triplets that are not valid at `cfg.eta`.
#[allow(clippy::too_many_arguments)]
pub fn soft_triplet_loss(
    z_i: &[f64],
    z_j: &[f64],
    z_k: &[f64],
    f_i: f64,
    f_j: f64,
    f_k: f64,
    cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    check(&[f_i, f_j, f_k])?;
    if !(cfg.nu > 0.0) {
        return Err(MetricError::InvalidTemperature(cfg.nu));
    }
    let d_pos = distance(z_i, z_j, cfg.norm_order)?;
    let d_neg = distance(z_i, z_k, cfg.norm_order)?;
    Ok(match soft_triplet_weights(f_i, f_j, f_k, cfg) {
        Some((wp, wn)) => math::softplus(d_pos - d_neg + cfg.rho) * wp * wn,
        None => 0.0,
    })
}

/// Soft contrastive loss from the latent distance `dz` and objective gap
/// `df`, both non-negative.
pub fn soft_contrastive_from_distances(dz: f64, df: f64, eta: f64) -> f64 {
    let (lo, hi) = (eta.min(dz), eta.max(dz));
    if df < eta {
        (hi / eta * (lo - df)).max(0.0)
    } else {
        ((2.0 - lo / eta) * (df - hi)).max(0.0)
    }
}

/// Soft contrastive loss: pulls pairs with `|Δf| < η` together and pushes
/// the others apart, continuously across `|Δf| = η`.
pub fn soft_contrastive_loss(
    z_i: &[f64],
    z_j: &[f64],
    f_i: f64,
    f_j: f64,
    cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    check(&[f_i, f_j])?;
    if !(cfg.eta > 0.0) {
        return Err(MetricError::InvalidThreshold(cfg.eta));
    }
    let dz = distance(z_i, z_j, cfg.norm_order)?;
    Ok(soft_contrastive_from_distances(dz, (f_i - f_j).abs(), cfg.eta))
}

/// Log-ratio loss with anchor `i`.
#[allow(clippy::too_many_arguments)]
pub fn log_ratio_loss(
    z_i: &[f64],
    z_j: &[f64],
    z_k: &[f64],
    f_i: f64,
    f_j: f64,
    f_k: f64,
    cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    check(&[f_i, f_j, f_k])?;
    let d_ij = distance(z_i, z_j, cfg.norm_order)?;
    let d_ik = distance(z_i, z_k, cfg.norm_order)?;
    let e = LOG_RATIO_EPS;
    let latent = ((d_ij + e) / (d_ik + e)).ln();
    let target = (((f_i - f_j).abs() + e) / ((f_i - f_k).abs() + e)).ln();
    let r = latent - target;
    if !r.is_finite() {
        return Err(MetricError::NonFinite);
    }
    Ok(r * r)
}

/// Simple loss `| ‖Δz‖ − |Δf| |`.
pub fn simple_loss(z_i: &[f64], z_j: &[f64], f_i: f64, f_j: f64, cfg: &MetricConfig) -> Result<f64, MetricError> {
    check(&[f_i, f_j])?;
    let dz = distance(z_i, z_j, cfg.norm_order)?;
    Ok((dz - (f_i - f_j).abs()).abs())
}
