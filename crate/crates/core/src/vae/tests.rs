use alloc::{vec, vec::Vec};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use super::*;
use crate::{
    diffcore::Tensor,
    math::{sigmoid, softplus, LN_2PI},
    metric::{self, MetricConfig, MetricKind, TupleBatch, WeightScheme},
    rng::ExpRng,
};

fn arch(likelihood: Likelihood, hidden: &[usize], latent: usize, head: bool) -> Architecture {
    Architecture { likelihood, hidden: hidden.to_vec(), latent_dim: latent, activation: Activation::Tanh, target_head: head }
}

fn small(seed: u64, head: bool) -> VaeParams {
    let mut rng = ExpRng::seed_from_u64(seed);
    VaeParams::init(arch(Likelihood::Bernoulli { dim: 6 }, &[5, 4], 2, head), &mut rng).unwrap()
}

fn random_bits(n: usize, d: usize, rng: &mut ExpRng) -> Vec<Vec<u8>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(0..2u8)).collect()).collect()
}

/// Straight-line dense layer: `x·W + b` on plain vectors.
fn dense(x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
    (0..w.cols()).map(|j| b.get(0, j) + (0..w.rows()).map(|i| x[i] * w.get(i, j)).sum::<f64>()).collect()
}

/// Independent forward pass of encoder and decoder.
fn oracle_forward(p: &VaeParams, x: &[f64], eps: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let t = p.tensors();
    let nh = p.arch().hidden.len();
    let mut h = x.to_vec();
    for l in 0..nh {
        h = dense(&h, &t[2 * l], &t[2 * l + 1]).into_iter().map(f64::tanh).collect();
    }
    let mu = dense(&h, &t[2 * nh], &t[2 * nh + 1]);
    let lv: Vec<f64> = dense(&h, &t[2 * nh + 2], &t[2 * nh + 3]).into_iter().map(|v| v.clamp(-10.0, 10.0)).collect();
    let z: Vec<f64> = mu.iter().zip(&lv).zip(eps).map(|((m, l), e)| m + (0.5 * l).exp() * e).collect();
    let mut g = z.clone();
    let mut first = Vec::new();
    for l in 0..nh {
        let k = nh + 2 + l;
        g = dense(&g, &t[2 * k], &t[2 * k + 1]).into_iter().map(f64::tanh).collect();
        if l == 0 {
            first = g.clone();
        }
    }
    let k = 2 * nh + 2;
    let logits = dense(&g, &t[2 * k], &t[2 * k + 1]);
    let head = if p.arch().target_head { dense(&first, &t[2 * k + 2], &t[2 * k + 3]) } else { vec![] };
    (mu, lv, logits, head)
}

fn oracle_elbo(p: &VaeParams, x: &[f64], eps: &[f64], beta: f64) -> f64 {
    let (mu, lv, logits, _) = oracle_forward(p, x, eps);
    let rec: f64 = x.iter().zip(&logits).map(|(xi, l)| xi * l - softplus(*l)).sum();
    let kl: f64 = mu.iter().zip(&lv).map(|(m, l)| 0.5 * (m * m + l.exp() - 1.0 - l)).sum();
    rec - beta * kl
}

#[test]
fn sigmoid_spot_values() {
    let lk = Likelihood::Bernoulli { dim: 2 };
    let p = lk.probabilities(&[2.0, 0.0]);
    assert!((p[0] - 0.880_797).abs() < 1e-6);
    assert_eq!(p[1], 0.5);
}

#[test]
fn categorical_probabilities_form_simplices() {
    let lk = Likelihood::Categorical { positions: 2, classes: 3 };
    let p = lk.probabilities(&[1.0, 2.0, 3.0, 0.0, 0.0, 0.0]);
    assert!((p[..3].iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert!(p[3..].iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    assert_eq!(lk.mode(&[1.0, 2.0, 3.0, 5.0, 0.0, 0.0]), vec![2, 0]);
}

#[test]
fn features_and_validation() {
    let lk = Likelihood::Categorical { positions: 2, classes: 3 };
    let f = lk.features(&[vec![2u8, 0]]).unwrap();
    assert_eq!(f.data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    assert_eq!(lk.features(&[vec![3u8, 0]]), Err(VaeError::InvalidInput));
    assert_eq!(lk.features(&[vec![0u8]]), Err(VaeError::InputShape { expected: 2, got: 1 }));
    assert_eq!(lk.features::<Vec<u8>>(&[]), Err(VaeError::EmptyBatch));
}

#[test]
fn architecture_checks() {
    let mut a = arch(Likelihood::Bernoulli { dim: 4 }, &[3], 0, false);
    assert!(VaeParams::init(a.clone(), &mut ExpRng::seed_from_u64(0)).is_err());
    a.latent_dim = 2;
    a.hidden.clear();
    assert!(a.validate().is_err());
    let p = small(1, true);
    // 6→5→4, mu and logvar 4→2, 2→4→5, out 5→6, head 4... first decoder hidden is 4 wide.
    let shapes = p.arch().layer_shapes();
    assert_eq!(shapes, vec![(6, 5), (5, 4), (4, 2), (4, 2), (2, 4), (4, 5), (5, 6), (4, 1)]);
    assert_eq!(p.parameter_count(), shapes.iter().map(|(i, o)| i * o + o).sum::<usize>());
    let bad = VaeParams::from_parts(p.arch().clone(), p.tensors()[1..].to_vec());
    assert!(bad.is_err());
}

#[test]
fn zero_final_layers_give_standard_posterior() {
    let mut p = small(2, false);
    let nh = p.arch().hidden.len();
    for k in 2 * nh..2 * nh + 4 {
        p.tensors_mut()[k].data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let x = p.likelihood().features(&random_bits(5, 6, &mut ExpRng::seed_from_u64(3))).unwrap();
    let post = p.encode(&x).unwrap();
    assert!(post.mean.data().iter().all(|&v| v == 0.0));
    assert!(post.logvar.data().iter().all(|&v| v == 0.0));
    assert!(kl_standard_normal(&post).iter().all(|&k| k == 0.0));
}

#[test]
fn forward_matches_straight_line_oracle() {
    let p = small(4, true);
    let mut rng = ExpRng::seed_from_u64(5);
    let xs = random_bits(7, 6, &mut rng);
    let x = p.likelihood().features(&xs).unwrap();
    let post = p.encode(&x).unwrap();
    let zero = vec![0.0; 2];
    for r in 0..7 {
        let (mu, lv, _, _) = oracle_forward(&p, x.row_slice(r), &zero);
        for c in 0..2 {
            assert!((post.mean.get(r, c) - mu[c]).abs() < 1e-13);
            assert!((post.logvar.get(r, c) - lv[c]).abs() < 1e-13);
        }
    }
    let z = Tensor::from_rows(&[[0.3, -1.2], [2.0, 0.5]]).unwrap();
    let logits = p.decode_logits(&z).unwrap();
    let head = p.predict_target(&z).unwrap();
    for r in 0..2 {
        // With zero-variance noise the oracle's z is the mean; feed z through a
        // posterior whose logvar is irrelevant by using eps = 0 and mu = z.
        let t = p.tensors();
        let mut g = z.row_slice(r).to_vec();
        let mut first = Vec::new();
        for l in 0..2 {
            let k = 4 + l;
            g = dense(&g, &t[2 * k], &t[2 * k + 1]).into_iter().map(f64::tanh).collect();
            if l == 0 {
                first = g.clone();
            }
        }
        let out = dense(&g, &t[12], &t[13]);
        for (a, b) in logits.row_slice(r).iter().zip(&out) {
            assert!((a - b).abs() < 1e-13);
        }
        assert!((head.get(r, 0) - dense(&first, &t[14], &t[15])[0]).abs() < 1e-13);
    }
    let probs = p.decode(&z).unwrap();
    assert!(probs.data().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn shape_errors() {
    let p = small(6, false);
    assert!(matches!(p.encode(&Tensor::zeros(1, 5)), Err(VaeError::InputShape { expected: 6, got: 5 })));
    assert!(matches!(p.decode(&Tensor::zeros(1, 3)), Err(VaeError::LatentShape { expected: 2, got: 3 })));
    assert_eq!(p.predict_target(&Tensor::zeros(1, 2)), Err(VaeError::MissingTargetHead));
}

#[test]
fn logvar_is_clamped() {
    let mut p = small(7, false);
    let b = 2 * (p.arch().hidden.len() + 1) + 1;
    p.tensors_mut()[b].data_mut().iter_mut().for_each(|v| *v = 50.0);
    let x = p.likelihood().features(&[vec![1u8; 6]]).unwrap();
    assert!(p.raw_logvar(&x).unwrap().data().iter().all(|&v| v > 40.0));
    assert!(p.encode(&x).unwrap().logvar.data().iter().all(|&v| v == LOGVAR_CLAMP));
}

#[test]
fn sampling_is_reproducible() {
    let p = small(8, false);
    let a = p.sample_decode(&[0.1, 0.2], &mut ExpRng::seed_from_u64(9)).unwrap();
    let b = p.sample_decode(&[0.1, 0.2], &mut ExpRng::seed_from_u64(9)).unwrap();
    assert_eq!(a, b);
    let many = p.sample_decode_many(&[0.1, 0.2], 3, &mut ExpRng::seed_from_u64(9)).unwrap();
    assert_eq!(many[0], a);
}

#[test]
fn kl_closed_form_examples() {
    let post = Posterior { mean: Tensor::row(&[2.0]), logvar: Tensor::row(&[0.0]) };
    assert_eq!(kl_standard_normal(&post), vec![2.0]);
}

#[test]
fn kl_matches_monte_carlo() {
    let mut rng = ExpRng::seed_from_u64(10);
    let mean = [0.7, -1.3];
    let logvar = [0.4_f64, -0.9];
    let post = Posterior { mean: Tensor::row(&mean), logvar: Tensor::row(&logvar) };
    let kl = kl_standard_normal(&post)[0];
    let n = 100_000;
    let samples: Vec<f64> = (0..n)
        .map(|_| {
            let mut log_q = 0.0;
            let mut log_p = 0.0;
            for d in 0..2 {
                let s = (0.5 * logvar[d]).exp();
                let e: f64 = rng.sample(rand_distr::StandardNormal);
                let z = mean[d] + s * e;
                log_q += -0.5 * (LN_2PI + logvar[d] + e * e);
                log_p += -0.5 * (LN_2PI + z * z);
            }
            log_q - log_p
        })
        .collect();
    let m = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    assert!((m - kl).abs() < 3.0 * se, "mc {m} closed {kl} se {se}");
}

fn batch_fixture(seed: u64, n: usize) -> (VaeParams, Tensor, Tensor) {
    let p = small(seed, true);
    let mut rng = ExpRng::seed_from_u64(seed + 100);
    let x = p.likelihood().features(&random_bits(n, 6, &mut rng)).unwrap();
    let noise = standard_normal(n, 2, &mut rng);
    (p, x, noise)
}

#[test]
fn per_datum_elbo_matches_oracle() {
    let (p, x, noise) = batch_fixture(11, 6);
    let elbo = per_datum_elbo(&p, &x, &noise, 0.3).unwrap();
    for r in 0..6 {
        let o = oracle_elbo(&p, x.row_slice(r), noise.row_slice(r), 0.3);
        assert!((elbo[r] - o).abs() < 1e-12 * o.abs().max(1.0));
    }
}

#[test]
fn com_label_reductions() {
    let (p, x, noise) = batch_fixture(12, 5);
    let elbo = per_datum_elbo(&p, &x, &noise, 1e-2).unwrap();
    let mean = elbo.iter().sum::<f64>() / 5.0;
    let uniform = com_label(&p, &x, &noise, &[0.2; 5], 1e-2).unwrap();
    assert!((uniform - mean).abs() < 1e-12);
    let one_hot = com_label(&p, &x, &noise, &[0.0, 0.0, 1.0, 0.0, 0.0], 1e-2).unwrap();
    assert!((one_hot - elbo[2]).abs() < 1e-12);
    let w = [0.1, 0.4, 0.05, 0.25, 0.2];
    let expect: f64 = w.iter().zip(&elbo).map(|(a, b)| a * b).sum();
    assert!((com_label(&p, &x, &noise, &w, 1e-2).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn com_label_tp_matches_oracle() {
    let (p, x, noise) = batch_fixture(13, 4);
    let w = [0.4, 0.3, 0.2, 0.1];
    let y = [0.5, -1.0, 1.5, 0.0];
    let base = com_label(&p, &x, &noise, &w, 1e-3).unwrap();
    assert!((com_label_tp(&p, &x, &noise, &w, &y, 1e-3, 0.0).unwrap() - base).abs() < 1e-12);
    let mut tp = 0.0;
    for r in 0..4 {
        let (_, _, _, head) = oracle_forward(&p, x.row_slice(r), noise.row_slice(r));
        tp += w[r] * (-0.5 * (LN_2PI + (y[r] - head[0]).powi(2)));
    }
    let got = com_label_tp(&p, &x, &noise, &w, &y, 1e-3, 10.0).unwrap();
    assert!((got - (base + 10.0 * tp)).abs() < 1e-11);

    // Prediction equal to the target leaves the Gaussian mode value.
    let z = p.encode(&x).unwrap().mean;
    let pred = p.predict_target(&z).unwrap();
    let zero = Tensor::zeros(4, 2);
    let w1 = [1.0, 0.0, 0.0, 0.0];
    let base = com_label(&p, &x, &zero, &w1, 0.0).unwrap();
    let at_mode = com_label_tp(&p, &x, &zero, &w1, &[pred.get(0, 0), 0.0, 0.0, 0.0], 0.0, 1.0).unwrap();
    assert!((at_mode - base - (-0.5 * LN_2PI)).abs() < 1e-12);

    let plain = small(13, false);
    assert_eq!(com_label_tp(&plain, &x, &noise, &w, &y, 1e-3, 1.0), Err(VaeError::MissingTargetHead));
}

fn metric_oracle(p: &VaeParams, x: &Tensor, noise: &Tensor, term: &MetricTerm<'_>) -> f64 {
    let z: Vec<Vec<f64>> = (0..x.rows())
        .map(|r| {
            let (mu, lv, _, _) = oracle_forward(p, x.row_slice(r), noise.row_slice(r));
            mu.iter().zip(&lv).zip(noise.row_slice(r)).map(|((m, l), e)| m + (0.5 * l).exp() * e).collect()
        })
        .collect();
    let v = term.values;
    let cfg = term.cfg;
    match term.tuples {
        TupleBatch::Pairs(ps) => ps
            .iter()
            .zip(term.tuple_weights)
            .map(|(&(i, j), w)| {
                w * match cfg.kind {
                    MetricKind::Simple => metric::simple_loss(&z[i], &z[j], v[i], v[j], cfg).unwrap(),
                    _ => metric::soft_contrastive_loss(&z[i], &z[j], v[i], v[j], cfg).unwrap(),
                }
            })
            .sum(),
        TupleBatch::Triplets(ts) => ts
            .iter()
            .zip(term.tuple_weights)
            .map(|(&(i, j, k), w)| {
                w * match cfg.kind {
                    MetricKind::LogRatio => metric::log_ratio_loss(&z[i], &z[j], &z[k], v[i], v[j], v[k], cfg).unwrap(),
                    _ => metric::soft_triplet_loss(&z[i], &z[j], &z[k], v[i], v[j], v[k], cfg).unwrap(),
                }
            })
            .sum(),
    }
}

#[test]
fn com_metric_matches_term_by_term_oracle() {
    let (p, x, noise) = batch_fixture(14, 10);
    let mut rng = ExpRng::seed_from_u64(15);
    let values = metric::normalize_values(&(0..10).map(|_| rng.random::<f64>()).collect::<Vec<_>>());
    for kind in [MetricKind::Simple, MetricKind::SoftContrastive, MetricKind::LogRatio, MetricKind::SoftTriplet] {
        let cfg = MetricConfig { eta: 0.3, rho: 0.1, ..MetricConfig::with_kind(kind) };
        let tuples = metric::sample_minibatch(&values, &cfg, 8, &mut rng).unwrap();
        let tw: Vec<f64> = (0..tuples.len()).map(|_| rng.random::<f64>()).collect();
        let term = MetricTerm { cfg: &cfg, values: &values, tuples: &tuples, tuple_weights: &tw };
        let got = com_metric(&p, &x, &noise, &term).unwrap();
        let expect = metric_oracle(&p, &x, &noise, &term);
        assert!((got - expect).abs() < 1e-10 * expect.abs().max(1.0), "{kind:?}: {got} vs {expect}");
    }
}

#[test]
fn com_metric_identical_codes_give_log_two() {
    let p = small(16, false);
    let x = p.likelihood().features(&vec![vec![1u8, 0, 1, 0, 1, 0]; 4]).unwrap();
    let noise = Tensor::zeros(4, 2);
    let cfg = MetricConfig { eta: 0.3, rho: 0.0, ..MetricConfig::with_kind(MetricKind::SoftTriplet) };
    let values = [0.0, 0.1, 0.9, 1.0];
    let tuples = TupleBatch::Triplets(vec![(0, 1, 2), (3, 2, 0)]);
    let tw = [0.25, 0.75];
    let term = MetricTerm { cfg: &cfg, values: &values, tuples: &tuples, tuple_weights: &tw };
    let mut expect = 0.0;
    for (&(i, j, k), w) in [(0, 1, 2), (3, 2, 0)].iter().zip(tw) {
        let (wp, wn) = metric::soft_triplet_weights(values[i], values[j], values[k], &cfg).unwrap();
        expect += w * core::f64::consts::LN_2 * wp * wn;
    }
    assert!((com_metric(&p, &x, &noise, &term).unwrap() - expect).abs() < 1e-14);
}

#[test]
fn zero_metric_multiplier_leaves_loss_unchanged() {
    let (p, x, noise) = batch_fixture(17, 6);
    let w = [1.0 / 6.0; 6];
    let values = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let cfg = MetricConfig { beta_metric: 0.0, ..MetricConfig::default() };
    let tuples = TupleBatch::Triplets(vec![(0, 1, 5)]);
    let term = MetricTerm { cfg: &cfg, values: &values, tuples: &tuples, tuple_weights: &[1.0] };
    let plain = loss_and_grad(&p, &Batch::labelled(&x, &noise, &w, 1e-3)).unwrap();
    let with = loss_and_grad(&p, &Batch { metric: Some(term), ..Batch::labelled(&x, &noise, &w, 1e-3) }).unwrap();
    assert_eq!(plain.0, with.0);
}

fn pretrain_fixture(seed: u64) -> (VaeParams, Tensor) {
    let p = small(seed, false);
    let mut rng = ExpRng::seed_from_u64(seed + 7);
    let x = p.likelihood().features(&random_bits(40, 6, &mut rng)).unwrap();
    (p, x)
}

#[test]
fn zero_epochs_is_a_no_op() {
    let (mut p, x) = pretrain_fixture(18);
    let before = p.clone();
    let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
    let report = pretrain(&mut p, &x, &cfg, &mut ExpRng::seed_from_u64(1)).unwrap();
    assert_eq!(p, before);
    assert!(report.epoch_losses.is_empty());
}

#[test]
fn small_gradient_step_descends() {
    let (p, x) = pretrain_fixture(19);
    let noise = standard_normal(40, 2, &mut ExpRng::seed_from_u64(2));
    let w = [1.0 / 40.0; 40];
    let batch = Batch::labelled(&x, &noise, &w, 1e-2);
    let (loss, grads) = loss_and_grad(&p, &batch).unwrap();
    let mut q = p.clone();
    for (t, g) in q.tensors_mut().iter_mut().zip(&grads) {
        for (a, b) in t.data_mut().iter_mut().zip(g.data()) {
            *a -= 1e-4 * b;
        }
    }
    assert!(loss_and_grad(&q, &batch).unwrap().0 < loss);
}

#[test]
fn training_is_deterministic() {
    let (p, x) = pretrain_fixture(20);
    let cfg = TrainConfig { epochs: 3, batch_size: 16, ..TrainConfig::default() };
    let run = |seed| {
        let mut q = p.clone();
        let r = pretrain(&mut q, &x, &cfg, &mut ExpRng::seed_from_u64(seed)).unwrap();
        (q, r)
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5).1, run(6).1);
}

#[test]
fn finetune_without_metric_or_weights_equals_pretraining() {
    let (p, x) = pretrain_fixture(21);
    let f: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
    let cfg = TrainConfig { epochs: 3, batch_size: 12, beta_kl_init: 1e-3, beta_kl_final: 1e-3, ..TrainConfig::default() };
    let mut a = p.clone();
    let ra = pretrain(&mut a, &x, &cfg, &mut ExpRng::seed_from_u64(4)).unwrap();
    let mut b = p.clone();
    let spec = FinetuneSpec {
        objective: LabelObjective::LabelMetric(MetricConfig { beta_metric: 0.0, ..MetricConfig::default() }),
        weights: WeightScheme::Uniform,
        include_unlabeled: false,
    };
    let data = FinetuneData { x: &x, f: &f, unlabeled: None };
    let rb = finetune(&mut b, &data, &cfg, &spec, &mut ExpRng::seed_from_u64(4)).unwrap();
    assert_eq!(ra.epoch_losses, rb.epoch_losses);
    assert_eq!(a, b);
}

#[test]
fn finetune_runs_every_objective() {
    let (_, x) = pretrain_fixture(22);
    let f: Vec<f64> = (0..40).map(|i| (i as f64 * 0.61).cos()).collect();
    let cfg = TrainConfig { epochs: 2, batch_size: 16, ..TrainConfig::default() };
    let u = x.gather_rows(&[0, 1, 2, 3, 4, 5, 6]);
    for objective in [
        LabelObjective::Label,
        LabelObjective::LabelTp,
        LabelObjective::LabelMetric(MetricConfig::with_kind(MetricKind::SoftTriplet)),
        LabelObjective::LabelMetric(MetricConfig::with_kind(MetricKind::LogRatio)),
        LabelObjective::LabelMetric(MetricConfig::with_kind(MetricKind::SoftContrastive)),
        LabelObjective::LabelMetric(MetricConfig::with_kind(MetricKind::Simple)),
    ] {
        let mut p = small(22, true);
        let spec = FinetuneSpec { objective, weights: WeightScheme::default(), include_unlabeled: true };
        let data = FinetuneData { x: &x, f: &f, unlabeled: Some(&u) };
        let r = finetune(&mut p, &data, &cfg, &spec, &mut ExpRng::seed_from_u64(1)).unwrap();
        assert_eq!(r.epoch_losses.len(), 2);
        assert!(r.epoch_losses.iter().all(|v| v.is_finite()));
        assert_eq!(r.steps, 6);
    }
    let mut p = small(22, false);
    let spec = FinetuneSpec { objective: LabelObjective::LabelTp, weights: WeightScheme::Uniform, include_unlabeled: false };
    let data = FinetuneData { x: &x, f: &f, unlabeled: None };
    assert_eq!(finetune(&mut p, &data, &cfg, &spec, &mut ExpRng::seed_from_u64(1)), Err(VaeError::MissingTargetHead));
}

#[test]
fn metric_skips_are_counted() {
    let (mut p, x) = pretrain_fixture(23);
    // Equal values: no soft-triplet negative exists in any batch.
    let f = vec![1.0; 40];
    let cfg = TrainConfig { epochs: 1, batch_size: 10, ..TrainConfig::default() };
    let spec = FinetuneSpec {
        objective: LabelObjective::LabelMetric(MetricConfig::default()),
        weights: WeightScheme::Uniform,
        include_unlabeled: false,
    };
    let data = FinetuneData { x: &x, f: &f, unlabeled: None };
    let r = finetune(&mut p, &data, &cfg, &spec, &mut ExpRng::seed_from_u64(2)).unwrap();
    assert_eq!(r.metric_skipped, 4);
}

#[test]
fn train_config_schedule_and_validation() {
    let cfg = TrainConfig::pretrain_default();
    assert_eq!((cfg.epochs, cfg.batch_size, cfg.lr), (300, 1024, 1e-3));
    assert_eq!(cfg.beta_kl_at(0), 1e-6);
    assert!((cfg.beta_kl_at(299) - 1e-4).abs() < 1e-18);
    assert_eq!(TrainConfig::default().beta_kl_at(0), 1e-4);
    let bad = TrainConfig { lr: 0.0, ..TrainConfig::default() };
    assert_eq!(bad.validate().unwrap_err().field, "lr");
    let (mut p, x) = pretrain_fixture(24);
    assert!(matches!(pretrain(&mut p, &x, &bad, &mut ExpRng::seed_from_u64(0)), Err(VaeError::Config(_))));
}

#[test]
fn training_improves_reconstruction() {
    let mut rng = ExpRng::seed_from_u64(25);
    // Two prototypes plus bit flips: learnable structure.
    let protos = [[1u8, 1, 1, 0, 0, 0], [0, 0, 0, 1, 1, 1]];
    let mut data = |n: usize| -> Vec<Vec<u8>> {
        (0..n)
            .map(|_| {
                let p = protos[rng.random_range(0..2)];
                p.iter().map(|&b| if rng.random::<f64>() < 0.05 { 1 - b } else { b }).collect()
            })
            .collect()
    };
    let (train, test) = (data(200), data(50));
    let mut p = small(26, false);
    let xt = p.likelihood().features(&train).unwrap();
    let xe = p.likelihood().features(&test).unwrap();
    let zero = Tensor::zeros(50, 2);
    let before: f64 = per_datum_elbo(&p, &xe, &zero, 0.0).unwrap().iter().sum();
    let cfg = TrainConfig { epochs: 60, batch_size: 32, lr: 1e-2, ..TrainConfig::default() };
    pretrain(&mut p, &xt, &cfg, &mut ExpRng::seed_from_u64(3)).unwrap();
    let after: f64 = per_datum_elbo(&p, &xe, &zero, 0.0).unwrap().iter().sum();
    assert!(after > before, "{after} <= {before}");
}

proptest! {
    #[test]
    fn bernoulli_probabilities_in_unit_interval(l in proptest::collection::vec(-30.0f64..30.0, 1..20)) {
        let lk = Likelihood::Bernoulli { dim: l.len() };
        for (p, x) in lk.probabilities(&l).iter().zip(&l) {
            prop_assert!(*p > 0.0 && *p < 1.0);
            prop_assert!((p - sigmoid(*x)).abs() < 1e-15);
        }
    }

    #[test]
    fn kl_is_non_negative(m in proptest::collection::vec(-5.0f64..5.0, 3), lv in proptest::collection::vec(-10.0f64..10.0, 3)) {
        let post = Posterior { mean: Tensor::row(&m), logvar: Tensor::row(&lv) };
        prop_assert!(kl_standard_normal(&post)[0] >= -1e-12);
    }

    #[test]
    fn categorical_samples_are_valid(seed in 0u64..1000) {
        let mut rng = ExpRng::seed_from_u64(seed);
        let lk = Likelihood::Categorical { positions: 4, classes: 5 };
        let logits: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
        let x = lk.sample(&logits, &mut rng);
        prop_assert!(lk.validate_input(&x).is_ok());
    }
}
