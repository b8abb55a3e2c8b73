use alloc::{collections::VecDeque, vec::Vec};

#[allow(unused_imports)] // float methods for no_std builds
use num_traits::Float;
use rand::Rng;

use super::{log_marginal_likelihood, GpError, GpHyperparams, GpModel, NOISE_FLOOR};
use crate::diffcore::Tensor;

/// Marginal-likelihood optimiser settings.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FitConfig {
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once the projected gradient's ∞-norm falls below this.
    pub grad_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { restarts: 3, max_iters: 200, grad_tol: 1e-5 }
    }
}

// Box on the log-parameters keeping the kernel matrix well conditioned.
const LOG_LS: (f64, f64) = (-6.907_755_278_982_137, 6.907_755_278_982_137);
const LOG_SF: (f64, f64) = (-9.210_340_371_976_184, 9.210_340_371_976_184);
const LOG_SN_MAX: f64 = 2.302_585_092_994_046;
const HISTORY: usize = 8;

fn bounds(d: usize) -> Vec<(f64, f64)> {
    let mut b = alloc::vec![LOG_LS; d];
    b.push(LOG_SF);
    b.push((NOISE_FLOOR.ln(), LOG_SN_MAX));
    b.push((f64::NEG_INFINITY, f64::INFINITY));
    b
}

fn project(x: &mut [f64], b: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(b) {
        *v = v.clamp(lo, hi);
    }
}

/// Gradient of the minimised objective with components that push against
/// an active bound zeroed.
fn projected(x: &[f64], g: &[f64], b: &[(f64, f64)]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(b)
        .map(|((&x, &g), &(lo, hi))| if (x <= lo && g > 0.0) || (x >= hi && g < 0.0) { 0.0 } else { g })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Negative LML and its gradient, or `None` where the kernel cannot be
/// factorised.
fn objective(z: &Tensor, y: &[f64], x: &[f64]) -> Option<(f64, Vec<f64>)> {
    let r = log_marginal_likelihood(z, y, &GpHyperparams::from_slice(x), true).ok()?;
    let g = r.grad?;
    Some((-r.value, g.iter().map(|v| -v).collect()))
}

/// Projected L-BFGS ascent on the log marginal likelihood from `x0`.
fn ascend(z: &Tensor, y: &[f64], mut x: Vec<f64>, cfg: &FitConfig) -> Option<(f64, Vec<f64>)> {
    let b = bounds(x.len() - 3);
    project(&mut x, &b);
    let (mut f, mut g) = objective(z, y, &x)?;
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    for _ in 0..cfg.max_iters {
        let pg = projected(&x, &g, &b);
        if pg.iter().fold(0.0_f64, |m, v| m.max(v.abs())) < cfg.grad_tol {
            break;
        }
        // Two-loop recursion for the quasi-Newton direction.
        let mut q = pg.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, yv, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(yv).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, yv, _)) = hist.back() {
            let gamma = dot(s, yv) / dot(yv, yv);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, yv, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let bta = rho * dot(yv, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - bta) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        if dot(&dir, &pg) >= 0.0 {
            hist.clear();
            dir = pg.iter().map(|v| -v).collect();
        }
        let mut step = if hist.is_empty() {
            (1.0 / pg.iter().fold(0.0_f64, |m, v| m.max(v.abs()))).min(1.0)
        } else {
            1.0
        };
        let slope = dot(&dir, &pg);
        let mut accepted = None;
        for _ in 0..40 {
            let mut xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            project(&mut xn, &b);
            if let Some((fn_, gn)) = objective(z, y, &xn) {
                if fn_ <= f + 1e-4 * step * slope {
                    accepted = Some((xn, fn_, gn));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else { break };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 {
            if hist.len() == HISTORY {
                hist.pop_front();
            }
            hist.push_back((s, yv, 1.0 / sy));
        }
        let improvement = f - fn_;
        (x, f, g) = (xn, fn_, gn);
        if improvement.abs() < 1e-12 * (1.0 + f.abs()) {
            break;
        }
    }
    Some((f, x))
}

fn initial(z: &Tensor, y: &[f64]) -> Vec<f64> {
    let n = z.rows() as f64;
    let mut x = Vec::with_capacity(z.cols() + 3);
    for c in 0..z.cols() {
        let col: Vec<f64> = (0..z.rows()).map(|r| z.get(r, c)).collect();
        let m = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
        x.push(if sd > 1e-6 { sd.ln() } else { 0.0 });
    }
    let my = y.iter().sum::<f64>() / n;
    let vy = y.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / n;
    let vy = if vy > 1e-8 { vy } else { 1.0 };
    x.push(vy.ln());
    x.push((0.1 * vy).max(NOISE_FLOOR).ln());
    x.push(my);
    x
}

/// Fits RBF hyperparameters by maximising the log marginal likelihood
/// (analytic gradients, projected L-BFGS) from a data-driven start plus
/// `restarts − 1` randomly perturbed starts, keeping the best.
pub fn fit<R: Rng + ?Sized>(z: Tensor, y: Vec<f64>, cfg: &FitConfig, rng: &mut R) -> Result<GpModel, GpError> {
    if z.rows() < 2 {
        return Err(GpError::TooFewPoints { min: 2, got: z.rows() });
    }
    if z.rows() != y.len() {
        return Err(GpError::InsufficientData { requested: z.rows(), available: y.len() });
    }
    let x0 = initial(&z, &y);
    let d = z.cols();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for r in 0..cfg.restarts.max(1) {
        let mut start = x0.clone();
        if r > 0 {
            for v in start.iter_mut().take(d + 2) {
                *v += rng.random_range(-1.0..1.0);
            }
        }
        if let Some((f, x)) = ascend(&z, &y, start, cfg) {
            if best.as_ref().map_or(true, |(bf, _)| f < *bf) {
                best = Some((f, x));
            }
        }
    }
    let hyp = match best {
        Some((_, x)) => GpHyperparams::from_slice(&x),
        // Every start failed to factorise: surface the error at the data-driven start.
        None => {
            let hyp = GpHyperparams::from_slice(&x0);
            log_marginal_likelihood(&z, &y, &hyp, false)?;
            hyp
        }
    };
    GpModel::new(z, y, hyp)
}
