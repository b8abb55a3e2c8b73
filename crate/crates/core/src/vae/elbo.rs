//! ELBO components on the tape.
//!
//! Every public value function here builds the same graph that training
//! differentiates, so reported values and optimised objectives agree.

use alloc::{vec, vec::Vec};

#[allow(unused_imports)] // float methods for no_std builds
use num_traits::Float;

use super::{model::Bound, Posterior, VaeError, VaeParams};
use crate::{
    diffcore::{Tape, Tensor, Var},
    math::LN_2PI,
    metric::{soft_triplet_weights, MetricConfig, MetricKind, TupleBatch, LOG_RATIO_EPS},
};

/// Metric regulariser inputs for one step. Tuple indices refer to rows of
/// the labelled batch; `values` are the batch's normalised objective values.
#[derive(Debug, Clone, Copy)]
pub struct MetricTerm<'a> {
    pub cfg: &'a MetricConfig,
    pub values: &'a [f64],
    pub tuples: &'a TupleBatch,
    pub tuple_weights: &'a [f64],
}

/// One optimisation step's worth of data and noise. The training loss is
/// `-(Σ wᵢ ELBOᵢ + β_R Σ wᵢ log h(yᵢ|zᵢ) − β_metric Com_metric + mean ELBO_U)`,
/// with absent parts dropped.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub x: &'a Tensor,
    /// Standard-normal noise for the reparameterised samples, `B × d`.
    pub noise: &'a Tensor,
    pub weights: &'a [f64],
    pub beta_kl: f64,
    /// Standardised targets for the prediction head.
    pub targets: Option<&'a [f64]>,
    pub beta_r: f64,
    pub metric: Option<MetricTerm<'a>>,
    /// Unlabelled features and their noise.
    pub unlabeled: Option<(&'a Tensor, &'a Tensor)>,
}

impl<'a> Batch<'a> {
    /// Plain weighted ELBO batch.
    pub fn labelled(x: &'a Tensor, noise: &'a Tensor, weights: &'a [f64], beta_kl: f64) -> Self {
        Self { x, noise, weights, beta_kl, targets: None, beta_r: 0.0, metric: None, unlabeled: None }
    }
}

/// `KL(N(μ, diag e^{lv}) ‖ N(0, I))` per row.
pub fn kl_standard_normal(post: &Posterior) -> Vec<f64> {
    (0..post.mean.rows())
        .map(|r| {
            let kl: f64 = post
                .mean
                .row_slice(r)
                .iter()
                .zip(post.logvar.row_slice(r))
                .map(|(&m, &lv)| m * m + lv.exp() - 1.0 - lv)
                .sum();
            0.5 * kl
        })
        .collect()
}

struct Forward {
    elbo: Var,
    z: Var,
    first_hidden: Var,
}

fn column(tape: &mut Tape, values: &[f64]) -> Var {
    tape.constant(Tensor::column(values))
}

fn forward(tape: &mut Tape, bound: &Bound<'_>, params: &VaeParams, x: &Tensor, noise: &Tensor, beta_kl: f64) -> Result<Forward, VaeError> {
    if x.cols() != params.likelihood().feature_dim() {
        return Err(VaeError::InputShape { expected: params.likelihood().feature_dim(), got: x.cols() });
    }
    if noise.shape() != [x.rows(), params.latent_dim()] {
        return Err(VaeError::LatentShape { expected: params.latent_dim(), got: noise.cols() });
    }
    let xv = tape.constant(x.clone());
    let (mu, lv) = bound.encode(tape, xv)?;
    let z = tape.reparameterize(mu, lv, noise.clone())?;
    let (logits, first_hidden) = bound.decode(tape, z)?;
    let rec = params.likelihood().log_likelihood(tape, logits, xv)?;
    let mu2 = tape.square(mu)?;
    let var = tape.exp(lv)?;
    let a = tape.add(mu2, var)?;
    let a = tape.add_scalar(a, -1.0)?;
    let a = tape.sub(a, lv)?;
    let kl = tape.sum_cols(a)?;
    let kl = tape.mul_scalar(kl, -0.5 * beta_kl)?;
    let elbo = tape.add(rec, kl)?;
    Ok(Forward { elbo, z, first_hidden })
}

fn weighted_sum(tape: &mut Tape, v: Var, weights: &[f64]) -> Result<Var, VaeError> {
    if tape.value(v).rows() != weights.len() {
        return Err(VaeError::BatchMismatch);
    }
    let w = column(tape, weights);
    let p = tape.mul(v, w)?;
    Ok(tape.sum(p)?)
}

fn target_log_likelihood(tape: &mut Tape, bound: &Bound<'_>, first_hidden: Var, targets: &[f64]) -> Result<Var, VaeError> {
    let h = bound.target_head(tape, first_hidden)?;
    if tape.value(h).rows() != targets.len() {
        return Err(VaeError::BatchMismatch);
    }
    let y = column(tape, targets);
    let r = tape.sub(y, h)?;
    let r = tape.square(r)?;
    let r = tape.mul_scalar(r, -0.5)?;
    Ok(tape.add_scalar(r, -0.5 * LN_2PI)?)
}

/// `Σ_t w_t · L_kind(z-tuple)` on the tape (without `β_metric`).
fn metric_on_tape(tape: &mut Tape, z: Var, term: &MetricTerm<'_>) -> Result<Var, VaeError> {
    let cfg = term.cfg;
    let n = tape.value(z).rows();
    if term.values.len() != n || term.tuple_weights.len() != term.tuples.len() {
        return Err(VaeError::BatchMismatch);
    }
    if term.tuples.is_empty() {
        return Err(VaeError::EmptyBatch);
    }
    let f = term.values;
    let dist = |tape: &mut Tape, a: &[usize], b: &[usize]| -> Result<Var, VaeError> {
        let za = tape.gather_rows(z, a)?;
        let zb = tape.gather_rows(z, b)?;
        let d = tape.sub(za, zb)?;
        Ok(tape.row_norm(d, cfg.norm_order)?)
    };
    let losses = match term.tuples {
        TupleBatch::Pairs(pairs) => {
            let (is, js): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let dz = dist(tape, &is, &js)?;
            let df: Vec<f64> = pairs.iter().map(|&(i, j)| (f[i] - f[j]).abs()).collect();
            match cfg.kind {
                MetricKind::SoftContrastive => {
                    // Each branch is affine in Δz once we know which side of
                    // η it lies on: relu(a·Δz + b).
                    let eta = cfg.eta;
                    let dzv: Vec<f64> = tape.value(dz).data().to_vec();
                    let (mut a, mut b) = (vec![0.0; df.len()], vec![0.0; df.len()]);
                    for t in 0..df.len() {
                        let (inside, d) = (dzv[t] <= eta, df[t]);
                        (a[t], b[t]) = match (d < eta, inside) {
                            (true, true) => (1.0, -d),
                            (true, false) => ((eta - d) / eta, 0.0),
                            (false, true) => (-(d - eta) / eta, 2.0 * (d - eta)),
                            (false, false) => (-1.0, d),
                        };
                    }
                    let av = column(tape, &a);
                    let bv = column(tape, &b);
                    let s = tape.mul(dz, av)?;
                    let s = tape.add(s, bv)?;
                    tape.relu(s)?
                }
                _ => {
                    let dfv = column(tape, &df);
                    let r = tape.sub(dz, dfv)?;
                    tape.abs(r)?
                }
            }
        }
        TupleBatch::Triplets(trips) => {
            let is: Vec<usize> = trips.iter().map(|t| t.0).collect();
            let js: Vec<usize> = trips.iter().map(|t| t.1).collect();
            let ks: Vec<usize> = trips.iter().map(|t| t.2).collect();
            let d_ij = dist(tape, &is, &js)?;
            let d_ik = dist(tape, &is, &ks)?;
            match cfg.kind {
                MetricKind::LogRatio => {
                    let e = LOG_RATIO_EPS;
                    let target: Vec<f64> = trips
                        .iter()
                        .map(|&(i, j, k)| (((f[i] - f[j]).abs() + e) / ((f[i] - f[k]).abs() + e)).ln())
                        .collect();
                    let a = tape.add_scalar(d_ij, e)?;
                    let a = tape.log(a)?;
                    let b = tape.add_scalar(d_ik, e)?;
                    let b = tape.log(b)?;
                    let r = tape.sub(a, b)?;
                    let t = column(tape, &target);
                    let r = tape.sub(r, t)?;
                    tape.square(r)?
                }
                _ => {
                    let w: Vec<f64> = trips
                        .iter()
                        .map(|&(i, j, k)| soft_triplet_weights(f[i], f[j], f[k], cfg).map_or(0.0, |(p, n)| p * n))
                        .collect();
                    let r = tape.sub(d_ij, d_ik)?;
                    let r = tape.add_scalar(r, cfg.rho)?;
                    let r = tape.softplus(r)?;
                    let wv = column(tape, &w);
                    tape.mul(r, wv)?
                }
            }
        }
    };
    weighted_sum(tape, losses, term.tuple_weights)
}

/// Builds `-ELBO_DML` for `batch` on `tape`.
fn build_loss(tape: &mut Tape, bound: &Bound<'_>, params: &VaeParams, batch: &Batch<'_>) -> Result<Var, VaeError> {
    let fwd = forward(tape, bound, params, batch.x, batch.noise, batch.beta_kl)?;
    let mut total = weighted_sum(tape, fwd.elbo, batch.weights)?;
    if let Some(targets) = batch.targets {
        let ll = target_log_likelihood(tape, bound, fwd.first_hidden, targets)?;
        let ll = weighted_sum(tape, ll, batch.weights)?;
        let ll = tape.mul_scalar(ll, batch.beta_r)?;
        total = tape.add(total, ll)?;
    }
    if let Some(term) = &batch.metric {
        let m = metric_on_tape(tape, fwd.z, term)?;
        let m = tape.mul_scalar(m, term.cfg.beta_metric)?;
        total = tape.sub(total, m)?;
    }
    if let Some((xu, noise_u)) = batch.unlabeled {
        let fu = forward(tape, bound, params, xu, noise_u, batch.beta_kl)?;
        let mean_u = tape.mean(fu.elbo)?;
        total = tape.add(total, mean_u)?;
    }
    Ok(tape.mul_scalar(total, -1.0)?)
}

/// Training loss `-ELBO_DML` and its gradient for every parameter tensor.
pub fn loss_and_grad(params: &VaeParams, batch: &Batch<'_>) -> Result<(f64, Vec<Tensor>), VaeError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let loss = build_loss(&mut tape, &bound, params, batch)?;
    let value = tape.value(loss).item()?;
    let grads = tape.backward(loss)?;
    let g = bound.vars.iter().zip(params.tensors()).map(|(&v, t)| grads.get_or_zeros(v, t)).collect();
    Ok((value, g))
}

/// Per-datum `log g(x|z) − β_KL·KL(q(z|x) ‖ N(0, I))` with `z = μ + σ⊙noise`.
pub fn per_datum_elbo(params: &VaeParams, x: &Tensor, noise: &Tensor, beta_kl: f64) -> Result<Vec<f64>, VaeError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let fwd = forward(&mut tape, &bound, params, x, noise, beta_kl)?;
    Ok(tape.value(fwd.elbo).data().to_vec())
}

/// `Σᵢ wᵢ·ELBOᵢ` over a labelled batch.
pub fn com_label(params: &VaeParams, x: &Tensor, noise: &Tensor, weights: &[f64], beta_kl: f64) -> Result<f64, VaeError> {
    let loss = value_only(params, &Batch::labelled(x, noise, weights, beta_kl))?;
    Ok(-loss)
}

/// [`com_label`] plus `β_R·Σᵢ wᵢ·log N(yᵢ | h(zᵢ), 1)` on standardised targets.
pub fn com_label_tp(
    params: &VaeParams,
    x: &Tensor,
    noise: &Tensor,
    weights: &[f64],
    targets: &[f64],
    beta_kl: f64,
    beta_r: f64,
) -> Result<f64, VaeError> {
    let batch = Batch { targets: Some(targets), beta_r, ..Batch::labelled(x, noise, weights, beta_kl) };
    let loss = value_only(params, &batch)?;
    Ok(-loss)
}

/// `Σ_t w_t·L_kind` over sampled tuples (before the `β_metric` multiplier).
pub fn com_metric(params: &VaeParams, x: &Tensor, noise: &Tensor, term: &MetricTerm<'_>) -> Result<f64, VaeError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let fwd = forward(&mut tape, &bound, params, x, noise, 0.0)?;
    let m = metric_on_tape(&mut tape, fwd.z, term)?;
    Ok(tape.value(m).item()?)
}

/// [`com_metric`] at fixed latent codes `z` (one row per batch element),
/// with its gradient with respect to `z`.
pub fn metric_loss_grad(z: &Tensor, term: &MetricTerm<'_>) -> Result<(f64, Tensor), VaeError> {
    let mut tape = Tape::new();
    let zv = tape.leaf(z.clone());
    let m = metric_on_tape(&mut tape, zv, term)?;
    let value = tape.value(m).item()?;
    let grad = tape.backward(m)?.get_or_zeros(zv, z);
    Ok((value, grad))
}

fn value_only(params: &VaeParams, batch: &Batch<'_>) -> Result<f64, VaeError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let loss = build_loss(&mut tape, &bound, params, batch)?;
    Ok(tape.value(loss).item()?)
}
