use alloc::vec::Vec;

#[allow(unused_imports)] // float methods for no_std builds
use num_traits::Float;
use rand::Rng;

use super::{GpError, GpModel};
use crate::{diffcore::Tensor, math::ei_profile};

/// `σ·(sΦ(s) + φ(s))` with `s = (μ − ξ)/σ`; `max(μ − ξ, 0)` when `σ = 0`.
pub fn expected_improvement(mu: f64, sigma: f64, xi: f64) -> f64 {
    if sigma <= 0.0 {
        return (mu - xi).max(0.0);
    }
    (sigma * ei_profile((mu - xi) / sigma)).max(0.0)
}

/// Axis-aligned search box.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    /// Extent of the latent data padded by one lengthscale per dimension.
    pub fn from_data(z: &Tensor, lengthscales: &[f64]) -> Self {
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for (c, &l) in lengthscales.iter().enumerate().take(z.cols()) {
            let col = (0..z.rows()).map(|r| z.get(r, c));
            let (a, b) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            lo.push(a - l);
            hi.push(b + l);
        }
        Self { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn clamp(&self, z: &mut [f64]) {
        for ((v, &lo), &hi) in z.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.clamp(lo, hi);
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(&lo, &hi)| lo + (hi - lo) * rng.random::<f64>()).collect()
    }
}

/// Multi-start EI maximiser settings.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AcquisitionConfig {
    pub starts: usize,
    /// Of the starts, how many sit on the best training inputs; the rest
    /// are uniform in the box.
    pub incumbent_starts: usize,
    pub iters: usize,
    pub fd_step: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self { starts: 32, incumbent_starts: 8, iters: 100, fd_step: 1e-5 }
    }
}

/// Result of maximising EI.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub z: Vec<f64>,
    pub ei: f64,
    pub mean: f64,
    pub std: f64,
    /// All starts had zero EI and the most uncertain start was returned.
    pub fallback: bool,
    /// Largest EI among the initial start points.
    pub best_start_ei: f64,
}

fn ei_at(model: &GpModel, z: &[f64], xi: f64) -> Result<f64, GpError> {
    let (m, s) = model.predict(z)?;
    Ok(expected_improvement(m, s, xi))
}

/// Gradient ascent on EI from one start: central finite-difference
/// gradients, normalised direction, step doubling on success and halving
/// on failure, so EI never decreases.
fn climb(model: &GpModel, bounds: &Bounds, xi: f64, cfg: &AcquisitionConfig, mut z: Vec<f64>, mut ei: f64) -> Result<(Vec<f64>, f64), GpError> {
    let d = z.len();
    let scale = bounds.lo.iter().zip(&bounds.hi).map(|(a, b)| b - a).fold(0.0, f64::max).max(1e-6);
    let mut step = 0.05 * scale;
    let mut g = alloc::vec![0.0; d];
    let mut probe = z.clone();
    for _ in 0..cfg.iters {
        for k in 0..d {
            probe.copy_from_slice(&z);
            probe[k] = z[k] + cfg.fd_step;
            let up = ei_at(model, &probe, xi)?;
            probe[k] = z[k] - cfg.fd_step;
            let down = ei_at(model, &probe, xi)?;
            g[k] = (up - down) / (2.0 * cfg.fd_step);
        }
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            break;
        }
        let mut moved = false;
        while step > 1e-9 * scale {
            for k in 0..d {
                probe[k] = z[k] + step * g[k] / norm;
            }
            bounds.clamp(&mut probe);
            let cand = ei_at(model, &probe, xi)?;
            if cand > ei {
                z.copy_from_slice(&probe);
                ei = cand;
                step *= 2.0;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok((z, ei))
}

/// Maximises EI over `bounds` from `cfg.starts` starting points and keeps
/// the best (first found on ties). When every start has zero EI the start
/// with the largest predictive standard deviation is returned instead.
pub fn optimize_acquisition<R: Rng + ?Sized>(
    model: &GpModel,
    bounds: &Bounds,
    xi: f64,
    cfg: &AcquisitionConfig,
    rng: &mut R,
) -> Result<Acquisition, GpError> {
    if bounds.dim() != model.dim() {
        return Err(GpError::DimensionMismatch { expected: model.dim(), got: bounds.dim() });
    }
    let mut order: Vec<usize> = (0..model.len()).collect();
    let y = model.targets();
    order.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
    let n_inc = cfg.incumbent_starts.min(cfg.starts).min(model.len());
    let mut starts: Vec<Vec<f64>> = order[..n_inc]
        .iter()
        .map(|&i| {
            let mut z = model.inputs().row_slice(i).to_vec();
            bounds.clamp(&mut z);
            z
        })
        .collect();
    while starts.len() < cfg.starts.max(1) {
        starts.push(bounds.sample(rng));
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut best_start_ei = 0.0_f64;
    let mut widest: Option<(usize, f64)> = None;
    for (i, s) in starts.iter().enumerate() {
        let (m, sd) = model.predict(s)?;
        let e0 = expected_improvement(m, sd, xi);
        best_start_ei = best_start_ei.max(e0);
        if widest.map_or(true, |(_, w)| sd > w) {
            widest = Some((i, sd));
        }
        let (z, e) = climb(model, bounds, xi, cfg, s.clone(), e0)?;
        if best.as_ref().map_or(true, |(_, be)| e > *be) {
            best = Some((z, e));
        }
    }
    let (z, ei, fallback) = match best {
        Some((z, e)) if e > 0.0 => (z, e, false),
        _ => {
            let (i, _) = widest.expect("at least one start");
            (starts[i].clone(), 0.0, true)
        }
    };
    let (mean, std) = model.predict(&z)?;
    Ok(Acquisition { z, ei, mean, std, fallback, best_start_ei })
}
