//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Operations are appended to a [`Tape`] as they execute, so node ids are a
//! topological order by construction. [`Tape::backward`] walks the ids in
//! reverse, visiting each node once.
//!
//! ```
//! use latent_bo_core::diffcore::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::scalar(2.0));
//! let y = tape.leaf(Tensor::scalar(3.0));
//! let p = tape.mul(x, y).unwrap();
//! let grads = tape.backward(p).unwrap();
//! assert_eq!(grads.get(x).unwrap().item().unwrap(), 3.0);
//! assert_eq!(grads.get(y).unwrap().item().unwrap(), 2.0);
//! ```

use alloc::{vec, vec::Vec};

#[allow(unused_imports)] // float methods for no_std builds
use num_traits::Float;

use super::{tensor::gemm, DiffError, Tensor};
use crate::math;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddScalar(usize),
    MulScalar(usize, f64),
    Exp(usize),
    Log(usize),
    Tanh(usize),
    Softplus(usize),
    Sigmoid(usize),
    Relu(usize),
    Abs(usize),
    Square(usize),
    Sum(usize),
    Mean(usize),
    SumCols(usize),
    RowNorm(usize, f64),
    Broadcast(usize),
    GatherRows(usize, Vec<usize>),
    LogSoftmaxGroups(usize, usize),
    Reparam { mu: usize, logvar: usize, eps: Tensor },
    Clamp(usize, f64, f64),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Operation record for one forward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; `None` if `v` does not
    /// influence the root.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when unreachable.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.rows(), like.cols()))
    }
}

fn broadcast_shape(op: &'static str, a: [usize; 2], b: [usize; 2]) -> Result<[usize; 2], DiffError> {
    let dim = |x: usize, y: usize| -> Option<usize> {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    match (dim(a[0], b[0]), dim(a[1], b[1])) {
        (Some(r), Some(c)) => Ok([r, c]),
        _ => Err(DiffError::ShapeMismatch { op, left: a, right: b }),
    }
}

#[inline]
fn bidx(t: &Tensor, r: usize, c: usize) -> usize {
    let rr = if t.rows() == 1 { 0 } else { r };
    let cc = if t.cols() == 1 { 0 } else { c };
    rr * t.cols() + cc
}

fn zip_broadcast(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor, DiffError> {
    let [rows, cols] = broadcast_shape(op, a.shape(), b.shape())?;
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::from_vec(rows, cols, data);
    }
    let mut out = Tensor::zeros(rows, cols);
    let (ad, bd) = (a.data(), b.data());
    for r in 0..rows {
        for c in 0..cols {
            out.data_mut()[r * cols + c] = f(ad[bidx(a, r, c)], bd[bidx(b, r, c)]);
        }
    }
    Ok(out)
}

/// Sums `g` (output-shaped) down to the operand shape `like`, scaling each
/// entry by `scale(r, c)`.
fn reduce_to(like: &Tensor, g: &Tensor, scale: impl Fn(usize, usize) -> f64) -> Tensor {
    let mut out = Tensor::zeros(like.rows(), like.cols());
    let cols = g.cols();
    let gd = g.data();
    for r in 0..g.rows() {
        for c in 0..cols {
            let i = bidx(like, r, c);
            out.data_mut()[i] += gd[r * cols + c] * scale(r, c);
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Result<Var, DiffError> {
        value.check_finite(name)?;
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an input. Gradients are reported for every leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { op: Op::Leaf, value });
        Var(self.nodes.len() - 1)
    }

    /// Alias of [`Tape::leaf`] for values whose gradient is not needed.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul(a.0, b.0), v, "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let v = zip_broadcast("add", self.value(a), self.value(b), |x, y| x + y)?;
        self.push(Op::Add(a.0, b.0), v, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let v = zip_broadcast("sub", self.value(a), self.value(b), |x, y| x - y)?;
        self.push(Op::Sub(a.0, b.0), v, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let v = zip_broadcast("mul", self.value(a), self.value(b), |x, y| x * y)?;
        self.push(Op::Mul(a.0, b.0), v, "mul")
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var, DiffError> {
        let v = self.value(a).map(|x| x + s);
        self.push(Op::AddScalar(a.0), v, "add_scalar")
    }

    pub fn mul_scalar(&mut self, a: Var, s: f64) -> Result<Var, DiffError> {
        let v = self.value(a).map(|x| x * s);
        self.push(Op::MulScalar(a.0, s), v, "mul_scalar")
    }

    /// `s - a`.
    pub fn rsub_scalar(&mut self, s: f64, a: Var) -> Result<Var, DiffError> {
        let n = self.mul_scalar(a, -1.0)?;
        self.add_scalar(n, s)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, DiffError> {
        let v = self.value(a).map(Float::exp);
        self.push(Op::Exp(a.0), v, "exp")
    }

    pub fn log(&mut self, a: Var) -> Result<Var, DiffError> {
        let v = self.value(a).map(Float::ln);
        self.push(Op::Log(a.0), v, "log")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, DiffError> {
        let v = self.value(a).map(Float::tanh);
        self.push(Op::Tanh(a.0), v, "tanh")
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var, DiffError> {
        let v = self.value(a).map(math::softplus);
        self.push(Op::Softplus(a.0), v, "softplus")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, DiffError> {
        let v = self.value(a).map(math::sigmoid);
        self.push(Op::Sigmoid(a.0), v, "sigmoid")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, DiffError> {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a.0), v, "relu")
    }

    pub fn abs(&mut self, a: Var) -> Result<Var, DiffError> {
        let v = self.value(a).map(Float::abs);
        self.push(Op::Abs(a.0), v, "abs")
    }

    pub fn square(&mut self, a: Var) -> Result<Var, DiffError> {
        let v = self.value(a).map(|x| x * x);
        self.push(Op::Square(a.0), v, "square")
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var, DiffError> {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a.0), v, "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, DiffError> {
        let t = self.value(a);
        let v = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(Op::Mean(a.0), v, "mean")
    }

    /// Per-row sum: `m×n -> m×1`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var, DiffError> {
        let t = self.value(a);
        let data: Vec<f64> = (0..t.rows()).map(|r| t.row_slice(r).iter().sum()).collect();
        let v = Tensor::from_vec(t.rows(), 1, data)?;
        self.push(Op::SumCols(a.0), v, "sum_cols")
    }

    /// Per-row `p`-norm: `m×n -> m×1`.
    pub fn row_norm(&mut self, a: Var, p: f64) -> Result<Var, DiffError> {
        if !(p >= 1.0) {
            return Err(DiffError::InvalidNormOrder(p));
        }
        let t = self.value(a);
        let data: Vec<f64> = (0..t.rows()).map(|r| norm_p(t.row_slice(r), p)).collect();
        let v = Tensor::from_vec(t.rows(), 1, data)?;
        self.push(Op::RowNorm(a.0, p), v, "row_norm")
    }

    /// Repeats a broadcastable operand to `rows×cols`.
    pub fn broadcast(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, DiffError> {
        let t = self.value(a);
        let shape = broadcast_shape("broadcast", t.shape(), [rows, cols])?;
        if shape != [rows, cols] {
            return Err(DiffError::ShapeMismatch { op: "broadcast", left: t.shape(), right: [rows, cols] });
        }
        let v = zip_broadcast("broadcast", t, &Tensor::zeros(rows, cols), |x, _| x)?;
        self.push(Op::Broadcast(a.0), v, "broadcast")
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, DiffError> {
        let t = self.value(a);
        if idx.is_empty() {
            return Err(DiffError::EmptyShape);
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= t.rows()) {
            return Err(DiffError::IndexOutOfRange { index: bad, len: t.rows() });
        }
        let v = t.gather_rows(idx);
        self.push(Op::GatherRows(a.0, idx.to_vec()), v, "gather_rows")
    }

    /// Log-softmax within consecutive column groups of width `group`.
    pub fn log_softmax_groups(&mut self, a: Var, group: usize) -> Result<Var, DiffError> {
        let t = self.value(a);
        if group == 0 || t.cols() % group != 0 {
            return Err(DiffError::ShapeMismatch { op: "log_softmax_groups", left: t.shape(), right: [1, group] });
        }
        let mut v = t.clone();
        for r in 0..v.rows() {
            for chunk in v.row_slice_mut(r).chunks_mut(group) {
                log_softmax_in_place(chunk);
            }
        }
        self.push(Op::LogSoftmaxGroups(a.0, group), v, "log_softmax_groups")
    }

    /// Reparameterised Gaussian sample `mu + exp(logvar / 2) * eps`.
    pub fn reparameterize(&mut self, mu: Var, logvar: Var, eps: Tensor) -> Result<Var, DiffError> {
        let (m, lv) = (self.value(mu), self.value(logvar));
        if m.shape() != lv.shape() || m.shape() != eps.shape() {
            return Err(DiffError::ShapeMismatch { op: "reparameterize", left: m.shape(), right: eps.shape() });
        }
        let data = m
            .data()
            .iter()
            .zip(lv.data())
            .zip(eps.data())
            .map(|((&m, &l), &e)| m + (0.5 * l).exp() * e)
            .collect();
        let v = Tensor::from_vec(m.rows(), m.cols(), data)?;
        self.push(Op::Reparam { mu: mu.0, logvar: logvar.0, eps }, v, "reparameterize")
    }

    /// Clamps entries to `[lo, hi]`; the gradient is zero where clamped.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, DiffError> {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a.0, lo, hi), v, "clamp")
    }

    /// Accumulates adjoints from a scalar root back to every node.
    pub fn backward(&self, root: Var) -> Result<Gradients, DiffError> {
        let rv = &self.nodes[root.0].value;
        if rv.shape() != [1, 1] {
            return Err(DiffError::NotScalar { shape: rv.shape() });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::scalar(1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            for p in parents(&node.op) {
                if p >= i {
                    return Err(DiffError::Cycle { node: i, parent: p });
                }
            }
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<(), DiffError> {
        let node = &self.nodes[i];
        let out = &node.value;
        let val = |j: usize| &self.nodes[j].value;
        let mut acc = |j: usize, d: Tensor| accumulate(&mut grads[j], d);
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (av, bv) = (val(a), val(b));
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                gemm(false, true, 1.0, g, bv, 0.0, &mut ga);
                let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                gemm(true, false, 1.0, av, g, 0.0, &mut gb);
                acc(a, ga);
                acc(b, gb);
            }
            &Op::Add(a, b) => {
                acc(a, reduce_to(val(a), g, |_, _| 1.0));
                acc(b, reduce_to(val(b), g, |_, _| 1.0));
            }
            &Op::Sub(a, b) => {
                acc(a, reduce_to(val(a), g, |_, _| 1.0));
                acc(b, reduce_to(val(b), g, |_, _| -1.0));
            }
            &Op::Mul(a, b) => {
                let (av, bv) = (val(a), val(b));
                acc(a, reduce_to(av, g, |r, c| bv.data()[bidx(bv, r, c)]));
                acc(b, reduce_to(bv, g, |r, c| av.data()[bidx(av, r, c)]));
            }
            &Op::AddScalar(a) => acc(a, g.clone()),
            &Op::MulScalar(a, s) => acc(a, g.scale(s)),
            &Op::Exp(a) => acc(a, elementwise(g, out, |g, y| g * y)),
            &Op::Log(a) => acc(a, elementwise(g, val(a), |g, x| g / x)),
            &Op::Tanh(a) => acc(a, elementwise(g, out, |g, y| g * (1.0 - y * y))),
            &Op::Softplus(a) => acc(a, elementwise(g, val(a), |g, x| g * math::sigmoid(x))),
            &Op::Sigmoid(a) => acc(a, elementwise(g, out, |g, y| g * y * (1.0 - y))),
            &Op::Relu(a) => acc(a, elementwise(g, val(a), |g, x| if x > 0.0 { g } else { 0.0 })),
            &Op::Abs(a) => acc(a, elementwise(g, val(a), |g, x| g * sign(x))),
            &Op::Square(a) => acc(a, elementwise(g, val(a), |g, x| 2.0 * g * x)),
            &Op::Sum(a) => {
                let s = g.item()?;
                let av = val(a);
                acc(a, Tensor::filled(av.rows(), av.cols(), s));
            }
            &Op::Mean(a) => {
                let av = val(a);
                let s = g.item()? / av.len() as f64;
                acc(a, Tensor::filled(av.rows(), av.cols(), s));
            }
            &Op::SumCols(a) => {
                let av = val(a);
                let mut d = Tensor::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    let gr = g.get(r, 0);
                    d.row_slice_mut(r).iter_mut().for_each(|x| *x = gr);
                }
                acc(a, d);
            }
            &Op::RowNorm(a, p) => {
                let av = val(a);
                let mut d = Tensor::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    let n = out.get(r, 0);
                    if n == 0.0 {
                        continue;
                    }
                    let gr = g.get(r, 0);
                    let denom = n.powf(p - 1.0);
                    for (dst, &x) in d.row_slice_mut(r).iter_mut().zip(av.row_slice(r)) {
                        *dst = gr * sign(x) * x.abs().powf(p - 1.0) / denom;
                    }
                }
                acc(a, d);
            }
            &Op::Broadcast(a) => acc(a, reduce_to(val(a), g, |_, _| 1.0)),
            Op::GatherRows(a, idx) => {
                let av = val(*a);
                let mut d = Tensor::zeros(av.rows(), av.cols());
                for (k, &src) in idx.iter().enumerate() {
                    for (dst, &x) in d.row_slice_mut(src).iter_mut().zip(g.row_slice(k)) {
                        *dst += x;
                    }
                }
                acc(*a, d);
            }
            &Op::LogSoftmaxGroups(a, group) => {
                let mut d = g.clone();
                for r in 0..d.rows() {
                    let yr = out.row_slice(r);
                    for (k, chunk) in d.row_slice_mut(r).chunks_mut(group).enumerate() {
                        let total: f64 = chunk.iter().sum();
                        let y = &yr[k * group..(k + 1) * group];
                        for (c, &ly) in chunk.iter_mut().zip(y) {
                            *c -= ly.exp() * total;
                        }
                    }
                }
                acc(a, d);
            }
            Op::Reparam { mu, logvar, eps } => {
                let lv = val(*logvar);
                let glv = Tensor::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data()
                        .iter()
                        .zip(eps.data())
                        .zip(lv.data())
                        .map(|((&g, &e), &l)| g * e * 0.5 * (0.5 * l).exp())
                        .collect(),
                )?;
                acc(*mu, g.clone());
                acc(*logvar, glv);
            }
            &Op::Clamp(a, lo, hi) => {
                acc(a, elementwise(g, val(a), |g, x| if x > lo && x < hi { g } else { 0.0 }))
            }
        }
        Ok(())
    }
}

fn parents(op: &Op) -> Vec<usize> {
    match op {
        Op::Leaf => Vec::new(),
        &Op::MatMul(a, b) | &Op::Add(a, b) | &Op::Sub(a, b) | &Op::Mul(a, b) => vec![a, b],
        &Op::AddScalar(a)
        | &Op::MulScalar(a, _)
        | &Op::Exp(a)
        | &Op::Log(a)
        | &Op::Tanh(a)
        | &Op::Softplus(a)
        | &Op::Sigmoid(a)
        | &Op::Relu(a)
        | &Op::Abs(a)
        | &Op::Square(a)
        | &Op::Sum(a)
        | &Op::Mean(a)
        | &Op::SumCols(a)
        | &Op::RowNorm(a, _)
        | &Op::Broadcast(a)
        | &Op::GatherRows(a, _)
        | &Op::LogSoftmaxGroups(a, _)
        | &Op::Clamp(a, _, _) => vec![a],
        Op::Reparam { mu, logvar, .. } => vec![*mu, *logvar],
    }
}

fn accumulate(slot: &mut Option<Tensor>, d: Tensor) {
    match slot {
        Some(acc) => acc.data_mut().iter_mut().zip(d.data()).for_each(|(a, b)| *a += *b),
        None => *slot = Some(d),
    }
}

fn elementwise(g: &Tensor, x: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let mut out = g.clone();
    out.data_mut().iter_mut().zip(x.data()).for_each(|(o, &x)| *o = f(*o, x));
    out
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `‖v‖_p` for `p ≥ 1`.
pub fn norm_p(v: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    } else if p == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else {
        v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

pub(crate) fn log_softmax_in_place(chunk: &mut [f64]) {
    let m = chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + chunk.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    chunk.iter_mut().for_each(|x| *x -= lse);
}
