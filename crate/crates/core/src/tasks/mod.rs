//! Synthetic structured black-box tasks with known optima.
//!
//! - Shape: 16×16 binary images built from random rectangles and
//!   ellipses; the objective is cosine similarity to a fixed target image.
//! - Sequence: 8 tokens over a 6-letter alphabet encoding the coefficients
//!   of a cubic; the objective is minus the mean squared error to a target
//!   cubic on a 64-point grid.
//!
//! Both are maximised, and generated datasets never contain the optimum or
//! the top 3% of sampled scores.

use alloc::{vec, vec::Vec};

#[allow(unused_imports)] // float methods for no_std builds
use num_traits::Float;
use rand::Rng;

use crate::vae::Likelihood;

pub const GRID: usize = 16;
pub const SEQ_LEN: usize = 8;
pub const ALPHABET: usize = 6;
const POLY_POINTS: usize = 64;
/// Fraction of the best sampled inputs dropped from generated datasets.
pub const TRUNCATE_TOP: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TaskKind {
    Shape,
    Sequence,
}

/// Inputs with their objective values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<u8>>,
    pub values: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn push(&mut self, x: Vec<u8>, f: f64) {
        self.inputs.push(x);
        self.values.push(f);
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.values.iter().copied().enumerate().fold(None, |acc, (i, v)| match acc {
            Some((_, b)) if b >= v => acc,
            _ => Some((i, v)),
        })
    }
}

/// Task definition plus the dataset sizes used by experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub unlabeled_size: usize,
    pub labeled_size: usize,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self { kind: TaskKind::Shape, unlabeled_size: 4096, labeled_size: 1024 }
    }
}

impl TaskKind {
    pub fn likelihood(self) -> Likelihood {
        match self {
            TaskKind::Shape => Likelihood::Bernoulli { dim: GRID * GRID },
            TaskKind::Sequence => Likelihood::Categorical { positions: SEQ_LEN, classes: ALPHABET },
        }
    }

    pub fn input_len(self) -> usize {
        self.likelihood().input_len()
    }

    /// The known maximiser `x*`.
    pub fn optimum(self) -> Vec<u8> {
        match self {
            TaskKind::Shape => target_image(),
            TaskKind::Sequence => vec![4, 1, 0, 3, 5, 2, 1, 4],
        }
    }

    /// `f(x*)`.
    pub fn f_star(self) -> f64 {
        match self {
            TaskKind::Shape => 1.0,
            TaskKind::Sequence => 0.0,
        }
    }

    pub fn objective(self, x: &[u8]) -> f64 {
        objective_eval(self, x)
    }

    /// Similarity to `x*` used by the domain-recovery probe: cosine for
    /// images, fraction of matching tokens for sequences.
    pub fn similarity(self, a: &[u8], b: &[u8]) -> f64 {
        match self {
            TaskKind::Shape => cosine(a, b),
            TaskKind::Sequence => a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len().max(1) as f64,
        }
    }

    pub fn random_input<R: Rng + ?Sized>(self, rng: &mut R) -> Vec<u8> {
        match self {
            TaskKind::Shape => random_shape(rng),
            TaskKind::Sequence => (0..SEQ_LEN).map(|_| rng.random_range(0..ALPHABET as u8)).collect(),
        }
    }
}

/// Cosine similarity of two binary images; 0 if either is blank.
fn cosine(a: &[u8], b: &[u8]) -> f64 {
    let dot: u32 = a.iter().zip(b).map(|(&x, &y)| u32::from(x & y)).sum();
    let na: u32 = a.iter().map(|&x| u32::from(x)).sum();
    let nb: u32 = b.iter().map(|&x| u32::from(x)).sum();
    if na == 0 || nb == 0 {
        return 0.0;
    }
    f64::from(dot) / (f64::from(na) * f64::from(nb)).sqrt()
}

fn target_image() -> Vec<u8> {
    // A plus sign: a vertical and a horizontal bar.
    let mut img = vec![0u8; GRID * GRID];
    for r in 0..GRID {
        for c in 0..GRID {
            let vertical = (3..13).contains(&r) && (6..10).contains(&c);
            let horizontal = (6..10).contains(&r) && (2..14).contains(&c);
            img[r * GRID + c] = u8::from(vertical || horizontal);
        }
    }
    img
}

fn random_shape<R: Rng + ?Sized>(rng: &mut R) -> Vec<u8> {
    let mut img = vec![0u8; GRID * GRID];
    let parts = rng.random_range(1..=4);
    for _ in 0..parts {
        let ellipse: bool = rng.random();
        let (cr, cc) = (rng.random_range(0..GRID) as f64, rng.random_range(0..GRID) as f64);
        let (hr, hc) = (rng.random_range(1..=6) as f64, rng.random_range(1..=6) as f64);
        for r in 0..GRID {
            for c in 0..GRID {
                let (dr, dc) = ((r as f64 - cr) / hr, (c as f64 - cc) / hc);
                let inside = if ellipse { dr * dr + dc * dc <= 1.0 } else { dr.abs() <= 1.0 && dc.abs() <= 1.0 };
                if inside {
                    img[r * GRID + c] = 1;
                }
            }
        }
    }
    img
}

fn token_value(t: u8) -> f64 {
    f64::from(t) - 2.5
}

/// Cubic coefficients `c₀..c₃`; each uses two tokens, `v(a) + v(b)/6`.
pub fn sequence_coefficients(x: &[u8]) -> [f64; 4] {
    let mut c = [0.0; 4];
    for (k, ck) in c.iter_mut().enumerate() {
        *ck = token_value(x[2 * k]) + token_value(x[2 * k + 1]) / ALPHABET as f64;
    }
    c
}

fn cubic(c: &[f64; 4], t: f64) -> f64 {
    ((c[3] * t + c[2]) * t + c[1]) * t + c[0]
}

fn sequence_objective(x: &[u8]) -> f64 {
    let c = sequence_coefficients(x);
    let target = sequence_coefficients(&TaskKind::Sequence.optimum());
    let mse: f64 = (0..POLY_POINTS)
        .map(|i| {
            let t = -1.0 + 2.0 * i as f64 / (POLY_POINTS - 1) as f64;
            let d = cubic(&c, t) - cubic(&target, t);
            d * d
        })
        .sum::<f64>()
        / POLY_POINTS as f64;
    -mse
}

/// Black-box objective (maximised).
pub fn objective_eval(kind: TaskKind, x: &[u8]) -> f64 {
    match kind {
        TaskKind::Shape => cosine(x, &target_image()),
        TaskKind::Sequence => sequence_objective(x),
    }
}

/// `n` labelled inputs drawn from the task's generator, after dropping the
/// optimum and the top 3% of an oversampled pool.
pub fn generate_dataset<R: Rng + ?Sized>(kind: TaskKind, n: usize, rng: &mut R) -> Dataset {
    let optimum = kind.optimum();
    let pool_size = (n as f64 / (1.0 - TRUNCATE_TOP)).ceil() as usize;
    let mut pool: Vec<(Vec<u8>, f64)> = Vec::with_capacity(pool_size);
    while pool.len() < pool_size {
        let x = kind.random_input(rng);
        if x == optimum {
            continue;
        }
        let f = objective_eval(kind, &x);
        pool.push((x, f));
    }
    // Drop the best `pool_size - n` entries while keeping generation order.
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| pool[b].1.total_cmp(&pool[a].1).then(a.cmp(&b)));
    let mut keep = vec![true; pool.len()];
    for &i in &order[..pool_size - n] {
        keep[i] = false;
    }
    let mut out = Dataset::default();
    for ((x, f), k) in pool.into_iter().zip(keep) {
        if k {
            out.push(x, f);
        }
    }
    out
}
