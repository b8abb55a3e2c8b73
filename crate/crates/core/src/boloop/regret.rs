use alloc::vec::Vec;

#[allow(unused_imports)] // float methods for no_std builds
use num_traits::Float;
use rand::RngCore;

use crate::vae::VaeParams;

/// Stochastic map from latent points to structured inputs.
pub trait Generator {
    fn generate(&self, z: &[f64], rng: &mut dyn RngCore) -> Vec<u8>;

    /// `n` independent draws at the same latent point.
    fn generate_many(&self, z: &[f64], n: usize, rng: &mut dyn RngCore) -> Vec<Vec<u8>> {
        (0..n).map(|_| self.generate(z, rng)).collect()
    }
}

impl Generator for VaeParams {
    fn generate(&self, z: &[f64], rng: &mut dyn RngCore) -> Vec<u8> {
        self.sample_decode(z, rng).expect("latent point matches the decoder")
    }

    fn generate_many(&self, z: &[f64], n: usize, rng: &mut dyn RngCore) -> Vec<Vec<u8>> {
        self.sample_decode_many(z, n, rng).expect("latent point matches the decoder")
    }
}

/// Monte-Carlo estimate of `E_{x∼g(·|z)}[f(x)]` and its standard error.
pub fn expected_objective<G: Generator + ?Sized, F: Fn(&[u8]) -> f64>(
    generator: &G,
    z: &[f64],
    objective: F,
    samples: usize,
    rng: &mut dyn RngCore,
) -> (f64, f64) {
    if samples == 0 {
        return (f64::NAN, f64::NAN);
    }
    let values: Vec<f64> = generator.generate_many(z, samples, rng).iter().map(|x| objective(x)).collect();
    let n = samples as f64;
    let mean = values.iter().sum::<f64>() / n;
    if samples < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-step regret `f(x*) − E[f(x)]` at each acquired latent point and its
/// running sum.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretCurve {
    pub terms: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub std_errors: Vec<f64>,
}

impl RegretCurve {
    pub fn push(&mut self, term: f64, se: f64) {
        let prev = self.cumulative.last().copied().unwrap_or(0.0);
        self.terms.push(term);
        self.cumulative.push(prev + term);
        self.std_errors.push(se);
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// `Reg / B`.
    pub fn average(&self) -> f64 {
        self.total() / self.terms.len().max(1) as f64
    }
}

/// Cumulative regret of a sequence of acquired latent points under one
/// generator, with `samples` decodes per point.
pub fn cumulative_regret<G: Generator + ?Sized, F: Fn(&[u8]) -> f64>(
    acquired: &[Vec<f64>],
    generator: &G,
    objective: F,
    f_star: f64,
    samples: usize,
    rng: &mut dyn RngCore,
) -> RegretCurve {
    let mut curve = RegretCurve::default();
    for z in acquired {
        let (m, se) = expected_objective(generator, z, &objective, samples, rng);
        curve.push(f_star - m, se);
    }
    curve
}
