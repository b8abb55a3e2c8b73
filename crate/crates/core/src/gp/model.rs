use alloc::{vec, vec::Vec};

#[allow(unused_imports)] // float methods for no_std builds
use num_traits::Float;

use super::{rbf_kernel, GpError, GpHyperparams};
use crate::{
    diffcore::{Cholesky, Tensor},
    math::{gaussian_log_density, LN_2PI},
};

/// Predictive variances are floored here before taking square roots.
const VAR_FLOOR: f64 = 1e-12;

/// Log marginal likelihood and, optionally, its gradient with respect to
/// [`GpHyperparams::to_vec`].
#[derive(Debug, Clone, PartialEq)]
pub struct LmlGradient {
    pub value: f64,
    pub grad: Option<Vec<f64>>,
}

fn check_inputs(z: &Tensor, y: &[f64], hyp: &GpHyperparams) -> Result<(), GpError> {
    if z.rows() != y.len() {
        return Err(GpError::InsufficientData { requested: z.rows(), available: y.len() });
    }
    if z.cols() != hyp.dim() {
        return Err(GpError::DimensionMismatch { expected: hyp.dim(), got: z.cols() });
    }
    if !z.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(GpError::NonFinite("training data"));
    }
    Ok(())
}

fn covariance(z: &Tensor, hyp: &GpHyperparams) -> Tensor {
    let n = z.rows();
    let mut k = Tensor::zeros(n, n);
    let noise = hyp.noise_var();
    for i in 0..n {
        for j in 0..=i {
            let v = rbf_kernel(z.row_slice(i), z.row_slice(j), hyp);
            k.set(i, j, v);
            k.set(j, i, v);
        }
        k.set(i, i, k.get(i, i) + noise);
    }
    k
}

/// `log p(y | Z, θ)` with the trace-formula gradient
/// `½ tr((ααᵀ − K⁻¹) ∂K/∂θ)`.
pub fn log_marginal_likelihood(z: &Tensor, y: &[f64], hyp: &GpHyperparams, with_grad: bool) -> Result<LmlGradient, GpError> {
    check_inputs(z, y, hyp)?;
    let n = z.rows();
    let chol = Cholesky::new(&covariance(z, hyp))?;
    let r: Vec<f64> = y.iter().map(|v| v - hyp.mean).collect();
    let alpha = chol.solve_vec(&r);
    let fit: f64 = r.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let value = -0.5 * fit - 0.5 * chol.log_det() - 0.5 * n as f64 * LN_2PI;
    if !value.is_finite() {
        return Err(GpError::NonFinite("log marginal likelihood"));
    }
    if !with_grad {
        return Ok(LmlGradient { value, grad: None });
    }
    let kinv = chol.inverse();
    let d = hyp.dim();
    let ls2: Vec<f64> = hyp.lengthscales().iter().map(|l| l * l).collect();
    let mut g = vec![0.0; d + 3];
    let mut trace_w = 0.0;
    let mut diff2 = vec![0.0; d];
    for i in 0..n {
        let zi = z.row_slice(i);
        for j in 0..=i {
            let w = alpha[i] * alpha[j] - kinv.get(i, j);
            let kf = rbf_kernel(zi, z.row_slice(j), hyp);
            // Off-diagonal pairs appear twice in the trace.
            let mult = if i == j { 1.0 } else { 2.0 };
            let wk = mult * w * kf;
            let zj = z.row_slice(j);
            for (k, d2) in diff2.iter_mut().enumerate() {
                let t = zi[k] - zj[k];
                *d2 = t * t / ls2[k];
            }
            for k in 0..d {
                g[k] += 0.5 * wk * diff2[k];
            }
            g[d] += 0.5 * wk;
            if i == j {
                trace_w += w;
            }
        }
    }
    g[d + 1] = 0.5 * hyp.noise_var() * trace_w;
    g[d + 2] = alpha.iter().sum();
    Ok(LmlGradient { value, grad: Some(g) })
}

/// A GP conditioned on standardised targets at fixed hyperparameters.
#[derive(Debug, Clone)]
pub struct GpModel {
    hyp: GpHyperparams,
    z: Tensor,
    y: Vec<f64>,
    chol: Cholesky,
    alpha: Vec<f64>,
}

impl GpModel {
    /// Conditions on `(z, y)` without optimising the hyperparameters.
    pub fn new(z: Tensor, y: Vec<f64>, hyp: GpHyperparams) -> Result<Self, GpError> {
        check_inputs(&z, &y, &hyp)?;
        if z.rows() < 1 {
            return Err(GpError::TooFewPoints { min: 1, got: z.rows() });
        }
        let chol = Cholesky::new(&covariance(&z, &hyp))?;
        let r: Vec<f64> = y.iter().map(|v| v - hyp.mean).collect();
        let alpha = chol.solve_vec(&r);
        Ok(Self { hyp, z, y, chol, alpha })
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyp
    }

    pub fn inputs(&self) -> &Tensor {
        &self.z
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.hyp.dim()
    }

    /// Jitter the factorisation needed.
    pub fn jitter(&self) -> f64 {
        self.chol.jitter()
    }

    /// Best observed (standardised) target.
    pub fn best_target(&self) -> f64 {
        self.y.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let r: Vec<f64> = self.y.iter().map(|v| v - self.hyp.mean).collect();
        let fit: f64 = r.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        -0.5 * fit - 0.5 * self.chol.log_det() - 0.5 * self.len() as f64 * LN_2PI
    }

    /// Adds observations and refactorises, keeping the hyperparameters.
    pub fn append(&mut self, z_new: &[f64], y_new: f64) -> Result<(), GpError> {
        if z_new.len() != self.dim() {
            return Err(GpError::DimensionMismatch { expected: self.dim(), got: z_new.len() });
        }
        let mut data = self.z.data().to_vec();
        data.extend_from_slice(z_new);
        let z = Tensor::from_vec(self.len() + 1, self.dim(), data)?;
        let mut y = self.y.clone();
        y.push(y_new);
        *self = Self::new(z, y, self.hyp.clone())?;
        Ok(())
    }

    /// Posterior mean and standard deviation of the latent function (noise
    /// excluded).
    pub fn predict(&self, z: &[f64]) -> Result<(f64, f64), GpError> {
        if z.len() != self.dim() {
            return Err(GpError::DimensionMismatch { expected: self.dim(), got: z.len() });
        }
        let mut k: Vec<f64> = (0..self.len()).map(|i| rbf_kernel(self.z.row_slice(i), z, &self.hyp)).collect();
        let mean = self.hyp.mean + k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        self.chol.solve_lower_in_place(&mut k);
        let var = self.hyp.signal_var() - k.iter().map(|v| v * v).sum::<f64>();
        Ok((mean, var.max(VAR_FLOOR).sqrt()))
    }

    /// Mean over test points of `log N(y | μ, σ² + σ_n²)`.
    pub fn predictive_log_likelihood(&self, z: &Tensor, y: &[f64]) -> Result<f64, GpError> {
        if z.rows() != y.len() || y.is_empty() {
            return Err(GpError::InsufficientData { requested: z.rows(), available: y.len() });
        }
        let mut total = 0.0;
        for (r, &yr) in y.iter().enumerate() {
            let (m, s) = self.predict(z.row_slice(r))?;
            total += gaussian_log_density(yr, m, s * s + self.hyp.noise_var());
        }
        Ok(total / y.len() as f64)
    }
}
