//! Independent oracles and the measurement suites built on them.
//!
//! The oracles are written from the loss and GP formulas with plain `f64`
//! loops (no shared code with the crate beyond its public API). Each suite
//! returns what it measured; callers decide the thresholds, so the same
//! suites back the integration tests and the acceptance report.

#![allow(dead_code)]

use latent_bo_core::{
    diffcore::Tensor,
    gp::{expected_improvement, log_marginal_likelihood, optimize_acquisition, AcquisitionConfig, Bounds, GpHyperparams, GpModel},
    metric::{log_ratio_loss, sample_minibatch, simple_loss, soft_contrastive_loss, soft_triplet_loss, MetricConfig, MetricKind},
    rng::ExpRng,
    vae::{loss_and_grad, metric_loss_grad, Activation, Architecture, Batch, Likelihood, MetricTerm, VaeParams},
};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

pub const KINDS: [MetricKind; 4] = [MetricKind::Simple, MetricKind::SoftContrastive, MetricKind::LogRatio, MetricKind::SoftTriplet];

// ---------------------------------------------------------------------------
// Scalar loss oracles
// ---------------------------------------------------------------------------

pub fn oracle_norm(a: &[f64], b: &[f64], p: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]).abs().powf(p);
    }
    s.powf(1.0 / p)
}

pub fn oracle_simple(dz: f64, df: f64) -> f64 {
    if dz >= df {
        dz - df
    } else {
        df - dz
    }
}

/// Two-branch soft contrastive penalty, one case per region.
pub fn oracle_soft_contrastive(dz: f64, df: f64, eta: f64) -> f64 {
    let relu = |v: f64| if v > 0.0 { v } else { 0.0 };
    if df < eta {
        if dz <= eta {
            // max{η,Δz} = η, min{η,Δz} = Δz
            relu(dz - df)
        } else {
            relu(dz / eta * (eta - df))
        }
    } else if dz <= eta {
        relu((2.0 - dz / eta) * (df - eta))
    } else {
        relu(df - dz)
    }
}

pub fn oracle_log_ratio(d_ij: f64, d_ik: f64, f_ij: f64, f_ik: f64, e: f64) -> f64 {
    let r = (d_ij + e).ln() - (d_ik + e).ln() - ((f_ij + e).ln() - (f_ik + e).ln());
    r * r
}

pub fn oracle_soft_triplet(d_pos: f64, d_neg: f64, f_ij: f64, f_ik: f64, eta: f64, nu: f64, rho: f64) -> f64 {
    if !(f_ij < eta) || f_ik < eta {
        return 0.0;
    }
    let wp = ((eta - f_ij) / (2.0 * nu)).tanh() / (eta / (2.0 * nu)).tanh();
    let wn = ((f_ik - eta) / (2.0 * nu)).tanh() / ((1.0 - eta) / (2.0 * nu)).tanh();
    let x = d_pos - d_neg + rho;
    let sp = if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
    sp * wp * wn
}

#[derive(Debug, Clone)]
pub struct LossOracleReport {
    /// Largest absolute error per kind, in [`KINDS`] order.
    pub max_abs_err: [f64; 4],
    pub cases: usize,
    /// Largest `|L(η − ε) − L(η + ε)|` of the soft contrastive loss.
    pub continuity_gap: f64,
    /// Cases that exercised a non-zero soft-triplet value.
    pub active_triplets: usize,
}

fn point<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// `cases` random inputs per loss, compared against the oracles.
pub fn loss_oracle_suite(cases: usize, seed: u64) -> LossOracleReport {
    let mut rng = ExpRng::seed_from_u64(seed);
    let mut err = [0.0f64; 4];
    let mut active = 0;
    for _ in 0..cases {
        let d = rng.random_range(1..=5);
        let p = if rng.random_bool(0.5) { 2.0 } else { rng.random_range(1.0..4.0) };
        let eta = rng.random_range(0.02..0.6);
        let nu = rng.random_range(0.01..0.5);
        let rho = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.5) };
        let cfg = MetricConfig { eta, nu, rho, norm_order: p, ..MetricConfig::default() };
        let (zi, zj, zk) = (point(d, &mut rng), point(d, &mut rng), point(d, &mut rng));
        let fi: f64 = rng.random();
        // Half the triplets are built valid so the weighted branch is exercised.
        let (fj, fk) = if rng.random_bool(0.5) {
            let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            (fi + s * rng.random_range(0.0..eta), fi - s * rng.random_range(eta..eta + 0.5))
        } else {
            (rng.random(), rng.random())
        };
        let (dij, dik) = (oracle_norm(&zi, &zj, p), oracle_norm(&zi, &zk, p));
        let (fij, fik) = ((fi - fj).abs(), (fi - fk).abs());

        let got = simple_loss(&zi, &zj, fi, fj, &cfg).unwrap();
        err[0] = err[0].max((got - oracle_simple(dij, fij)).abs());
        let got = soft_contrastive_loss(&zi, &zj, fi, fj, &cfg).unwrap();
        err[1] = err[1].max((got - oracle_soft_contrastive(dij, fij, eta)).abs());
        let got = log_ratio_loss(&zi, &zj, &zk, fi, fj, fk, &cfg).unwrap();
        err[2] = err[2].max((got - oracle_log_ratio(dij, dik, fij, fik, 1e-9)).abs());
        let got = soft_triplet_loss(&zi, &zj, &zk, fi, fj, fk, &cfg).unwrap();
        let want = oracle_soft_triplet(dij, dik, fij, fik, eta, nu, rho);
        if want > 0.0 {
            active += 1;
        }
        err[3] = err[3].max((got - want).abs());
    }

    // Continuity across Δf = η at fixed Δz, through the public loss.
    let eps = 1e-6;
    let mut gap = 0.0f64;
    for _ in 0..1000 {
        let eta = rng.random_range(0.05..0.9);
        let dz = rng.random_range(0.0..2.0);
        let cfg = MetricConfig { eta, ..MetricConfig::default() };
        let z = [0.0, 0.0];
        let w = [dz, 0.0];
        let below = soft_contrastive_loss(&z, &w, 0.0, eta - eps, &cfg).unwrap();
        let above = soft_contrastive_loss(&z, &w, 0.0, eta + eps, &cfg).unwrap();
        gap = gap.max((below - above).abs());
    }
    LossOracleReport { max_abs_err: err, cases, continuity_gap: gap, active_triplets: active }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checks
// ---------------------------------------------------------------------------

/// `‖a − b‖ / max(‖b‖, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(floor)
}

fn central_fd(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GradientReport {
    /// Worst relative error of each standalone metric loss (w.r.t. latent codes).
    pub standalone: Vec<(String, f64)>,
    /// Worst relative error of each ELBO objective (w.r.t. all VAE parameters).
    pub elbo: Vec<(String, f64)>,
}

impl GradientReport {
    pub fn worst_standalone(&self) -> f64 {
        self.standalone.iter().map(|s| s.1).fold(0.0, f64::max)
    }

    pub fn worst_elbo(&self) -> f64 {
        self.elbo.iter().map(|s| s.1).fold(0.0, f64::max)
    }
}

/// Values in `[0, 1]` spread enough that every point has partners on both
/// sides of `η = 0.3`.
fn spread_values(n: usize, rng: &mut ExpRng) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + rng.random_range(0.0..0.3)) / n as f64).collect()
}

fn metric_cfg(kind: MetricKind) -> MetricConfig {
    MetricConfig { kind, eta: 0.3, nu: 0.2, rho: 0.1, ..MetricConfig::default() }
}

/// Random latent batches and sampled tuples; the analytic gradient of the
/// weighted metric sum against central differences in `z`.
pub fn standalone_gradient_suite(cases: usize, seed: u64) -> Vec<(String, f64)> {
    let mut rng = ExpRng::seed_from_u64(seed);
    KINDS
        .iter()
        .map(|&kind| {
            let cfg = metric_cfg(kind);
            let mut worst = 0.0f64;
            for _ in 0..cases {
                let (n, d) = (8, 3);
                let z: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.5..1.5)).collect();
                let values = spread_values(n, &mut rng);
                let tuples = sample_minibatch(&values, &cfg, 6, &mut rng).unwrap();
                let tw: Vec<f64> = (0..tuples.len()).map(|_| rng.random_range(0.1..1.0)).collect();
                let term = MetricTerm { cfg: &cfg, values: &values, tuples: &tuples, tuple_weights: &tw };
                let zt = Tensor::from_vec(n, d, z.clone()).unwrap();
                let (_, g) = metric_loss_grad(&zt, &term).unwrap();
                let fd = central_fd(&z, 1e-6, |p| metric_loss_grad(&Tensor::from_vec(n, d, p.to_vec()).unwrap(), &term).unwrap().0);
                worst = worst.max(rel_err(g.data(), &fd, 1e-6));
            }
            (format!("{kind:?}"), worst)
        })
        .collect()
}

fn flatten(params: &VaeParams) -> Vec<f64> {
    params.tensors().iter().flat_map(|t| t.data().iter().copied()).collect()
}

fn unflatten(params: &mut VaeParams, v: &[f64]) {
    let mut at = 0;
    for t in params.tensors_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&v[at..at + n]);
        at += n;
    }
}

/// The toy 2-4-2 VAE (2 Bernoulli inputs, one hidden layer of 4, 2-d
/// latent) with a target head.
pub fn toy_vae(seed: u64) -> VaeParams {
    let arch = Architecture {
        likelihood: Likelihood::Bernoulli { dim: 2 },
        hidden: vec![4],
        latent_dim: 2,
        activation: Activation::Tanh,
        target_head: true,
    };
    let mut p = VaeParams::init(arch, &mut ExpRng::seed_from_u64(seed)).unwrap();
    // Non-zero biases so every parameter has a generic gradient.
    let mut rng = ExpRng::seed_from_u64(seed ^ 0xb1a5);
    for t in p.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    p
}

/// `-ELBO_DML` parameter gradients of the toy VAE for the weighted ELBO,
/// the target-prediction variant, each metric-regularised variant and the
/// variant with an unlabelled term, against central differences.
pub fn elbo_gradient_suite(cases: usize, seed: u64) -> Vec<(String, f64)> {
    let mut rng = ExpRng::seed_from_u64(seed);
    let mut names: Vec<String> = vec!["label".into(), "label_tp".into()];
    names.extend(KINDS.iter().map(|k| format!("label_metric_{k:?}")));
    names.push("label_metric_unlabeled".into());
    let mut worst = vec![0.0f64; names.len()];
    for case in 0..cases {
        let params = toy_vae(seed.wrapping_add(case as u64));
        let b = 6;
        let x = Tensor::from_vec(b, 2, (0..2 * b).map(|_| f64::from(rng.random_range(0u8..2))).collect()).unwrap();
        let noise = Tensor::from_vec(b, 2, (0..2 * b).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap();
        let xu = Tensor::from_vec(4, 2, (0..8).map(|_| f64::from(rng.random_range(0u8..2))).collect()).unwrap();
        let nu = Tensor::from_vec(4, 2, (0..8).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap();
        let w: Vec<f64> = {
            let raw: Vec<f64> = (0..b).map(|_| rng.random_range(0.2..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        };
        let targets: Vec<f64> = (0..b).map(|_| StandardNormal.sample(&mut rng)).collect();
        let values = spread_values(b, &mut rng);
        let cfgs: Vec<MetricConfig> = KINDS.iter().map(|&k| MetricConfig { beta_metric: 0.7, ..metric_cfg(k) }).collect();
        let tuples: Vec<_> = cfgs.iter().map(|c| sample_minibatch(&values, c, 4, &mut rng).unwrap()).collect();
        let tws: Vec<Vec<f64>> = tuples.iter().map(|t| vec![1.0 / t.len() as f64; t.len()]).collect();

        let base = Batch::labelled(&x, &noise, &w, 0.5);
        let mut batches = vec![base, Batch { targets: Some(&targets), beta_r: 2.0, ..base }];
        for k in 0..KINDS.len() {
            let term = MetricTerm { cfg: &cfgs[k], values: &values, tuples: &tuples[k], tuple_weights: &tws[k] };
            batches.push(Batch { metric: Some(term), ..base });
        }
        let last = MetricTerm { cfg: &cfgs[3], values: &values, tuples: &tuples[3], tuple_weights: &tws[3] };
        batches.push(Batch { metric: Some(last), unlabeled: Some((&xu, &nu)), ..base });

        let theta = flatten(&params);
        for (i, batch) in batches.iter().enumerate() {
            let (_, grads) = loss_and_grad(&params, batch).unwrap();
            let g: Vec<f64> = grads.iter().flat_map(|t| t.data().iter().copied()).collect();
            let mut probe = params.clone();
            let fd = central_fd(&theta, 1e-6, |v| {
                unflatten(&mut probe, v);
                loss_and_grad(&probe, batch).unwrap().0
            });
            worst[i] = worst[i].max(rel_err(&g, &fd, 1e-6));
        }
    }
    names.into_iter().zip(worst).collect()
}

pub fn gradient_suite(seed: u64) -> GradientReport {
    GradientReport { standalone: standalone_gradient_suite(25, seed), elbo: elbo_gradient_suite(5, seed.wrapping_add(1)) }
}

// ---------------------------------------------------------------------------
// Dense GP oracle
// ---------------------------------------------------------------------------

/// Gauss-Jordan inverse and log-determinant with partial pivoting.
pub fn dense_inverse(a: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let n = a.len();
    let mut m = a.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut log_det = 0.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        inv.swap(c, p);
        let piv = m[c][c];
        log_det += piv.abs().ln();
        for j in 0..n {
            m[c][j] /= piv;
            inv[c][j] /= piv;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                for j in 0..n {
                    m[r][j] -= f * m[c][j];
                    inv[r][j] -= f * inv[c][j];
                }
            }
        }
    }
    (inv, log_det)
}

/// A GP problem with explicit hyperparameters, evaluated densely.
#[derive(Debug, Clone)]
pub struct DenseGp {
    pub z: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    /// `[log ℓ₁..log ℓ_d, log σ_f², log σ_n², c]`, the crate's layout.
    pub theta: Vec<f64>,
}

impl DenseGp {
    pub fn random(rng: &mut ExpRng, n: usize, d: usize) -> Self {
        let z = (0..n).map(|_| point(d, rng)).collect();
        let y = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let mut theta: Vec<f64> = (0..d).map(|_| rng.random_range(0.4f64..2.0).ln()).collect();
        theta.push(rng.random_range(0.5f64..2.0).ln());
        theta.push(rng.random_range(0.01f64..0.3).ln());
        theta.push(rng.random_range(-0.5..0.5));
        DenseGp { z, y, theta }
    }

    pub fn dim(&self) -> usize {
        self.theta.len() - 3
    }

    fn kernel(&self, theta: &[f64], a: &[f64], b: &[f64]) -> f64 {
        let d = self.dim();
        let mut r2 = 0.0;
        for k in 0..d {
            let t = (a[k] - b[k]) / theta[k].exp();
            r2 += t * t;
        }
        theta[d].exp() * (-0.5 * r2).exp()
    }

    fn cov(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        let n = self.z.len();
        let sn2 = theta[self.dim() + 1].exp();
        (0..n)
            .map(|i| (0..n).map(|j| self.kernel(theta, &self.z[i], &self.z[j]) + if i == j { sn2 } else { 0.0 }).collect())
            .collect()
    }

    pub fn lml_at(&self, theta: &[f64]) -> f64 {
        let (inv, log_det) = dense_inverse(&self.cov(theta));
        let c = theta[self.dim() + 2];
        let r: Vec<f64> = self.y.iter().map(|v| v - c).collect();
        let n = r.len();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += r[i] * inv[i][j] * r[j];
            }
        }
        -0.5 * quad - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    pub fn lml(&self) -> f64 {
        self.lml_at(&self.theta)
    }

    /// Central differences of the dense log-likelihood.
    pub fn lml_grad_fd(&self) -> Vec<f64> {
        central_fd(&self.theta, 1e-5, |t| self.lml_at(t))
    }

    /// Posterior mean and variance of the latent function at `q`.
    pub fn predict(&self, q: &[f64]) -> (f64, f64) {
        let (inv, _) = dense_inverse(&self.cov(&self.theta));
        let d = self.dim();
        let c = self.theta[d + 2];
        let ks: Vec<f64> = self.z.iter().map(|zi| self.kernel(&self.theta, zi, q)).collect();
        let n = ks.len();
        let (mut mean, mut quad) = (c, 0.0);
        for i in 0..n {
            for j in 0..n {
                mean += ks[i] * inv[i][j] * (self.y[j] - c);
                quad += ks[i] * inv[i][j] * ks[j];
            }
        }
        (mean, self.theta[d].exp() - quad)
    }

    pub fn hyperparams(&self) -> GpHyperparams {
        GpHyperparams::from_slice(&self.theta)
    }

    pub fn tensor(&self) -> Tensor {
        Tensor::from_rows(&self.z).unwrap()
    }
}

#[derive(Debug, Clone)]
pub struct GpReport {
    pub problems: usize,
    pub lml_rel: f64,
    pub grad_rel: f64,
    pub mean_rel: f64,
    pub var_rel: f64,
    /// EI checks and the largest `|EI − MC| / SE`.
    pub ei_cases: usize,
    pub ei_worst_se: f64,
    /// Largest `|ẑ − grid argmax|` over the 1-D maximiser problems.
    pub argmax_dist: f64,
}

/// Monte-Carlo `E[max(μ + σε − ξ, 0)]` and its standard error.
pub fn ei_monte_carlo(mu: f64, sigma: f64, xi: f64, samples: usize, rng: &mut ExpRng) -> (f64, f64) {
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let e: f64 = StandardNormal.sample(rng);
        let v = (mu + sigma * e - xi).max(0.0);
        s += v;
        s2 += v * v;
    }
    let n = samples as f64;
    let m = s / n;
    let var = (s2 / n - m * m) * n / (n - 1.0);
    (m, (var.max(0.0) / n).sqrt())
}

pub fn gp_suite(seed: u64, ei_samples: usize) -> GpReport {
    let mut rng = ExpRng::seed_from_u64(seed);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    let problems = 20;
    let (mut lml_rel, mut grad_rel, mut mean_rel, mut var_rel) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for p in 0..problems {
        let gp = DenseGp::random(&mut rng, 10, 1 + p % 3);
        let got = log_marginal_likelihood(&gp.tensor(), &gp.y, &gp.hyperparams(), true).unwrap();
        lml_rel = lml_rel.max(rel(got.value, gp.lml()));
        grad_rel = grad_rel.max(rel_err(got.grad.as_ref().unwrap(), &gp.lml_grad_fd(), 1e-8));
        let model = GpModel::new(gp.tensor(), gp.y.clone(), gp.hyperparams()).unwrap();
        for _ in 0..5 {
            let q = point(gp.dim(), &mut rng);
            let (m, s) = model.predict(&q).unwrap();
            let (om, ov) = gp.predict(&q);
            mean_rel = mean_rel.max(rel(m, om));
            var_rel = var_rel.max(rel(s * s, ov));
        }
    }

    let ei_cases = 100;
    let mut ei_worst = 0.0f64;
    for _ in 0..ei_cases {
        let mu = rng.random_range(-2.0..2.0);
        let sigma = rng.random_range(0.05..2.0);
        // Within three σ of the mean, so the MC estimate has non-zero samples.
        let xi = mu + sigma * rng.random_range(-3.0..3.0);
        let (mc, se) = ei_monte_carlo(mu, sigma, xi, ei_samples, &mut rng);
        let ei = expected_improvement(mu, sigma, xi);
        ei_worst = ei_worst.max((ei - mc).abs() / se.max(1e-300));
    }

    let mut argmax_dist = 0.0f64;
    for _ in 0..5 {
        let mut gp = DenseGp::random(&mut rng, 8, 1);
        gp.theta[1] = 0.3f64.ln();
        gp.theta[2] = 0.01f64.ln();
        let model = GpModel::new(gp.tensor(), gp.y.clone(), gp.hyperparams()).unwrap();
        let bounds = Bounds { lo: vec![-3.0], hi: vec![3.0] };
        let xi = model.best_target();
        let acq = optimize_acquisition(&model, &bounds, xi, &AcquisitionConfig::default(), &mut rng).unwrap();
        let grid = 10_000;
        let (mut best_z, mut best) = (0.0, f64::NEG_INFINITY);
        for i in 0..grid {
            let z = -3.0 + 6.0 * i as f64 / (grid - 1) as f64;
            let (m, s) = model.predict(&[z]).unwrap();
            let e = expected_improvement(m, s, xi);
            if e > best {
                (best_z, best) = (z, e);
            }
        }
        argmax_dist = argmax_dist.max((acq.z[0] - best_z).abs());
    }
    GpReport { problems, lml_rel, grad_rel, mean_rel, var_rel, ei_cases, ei_worst_se: ei_worst, argmax_dist }
}
