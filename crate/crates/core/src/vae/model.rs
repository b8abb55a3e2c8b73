use alloc::vec::Vec;

#[allow(unused_imports)] // float methods for no_std builds
use num_traits::Float;
use rand::Rng;

use super::VaeError;
use crate::{
    diffcore::{log_softmax_in_place, Tape, Tensor, Var},
    math,
};

/// Log-variance outputs are clamped to this symmetric range.
pub const LOGVAR_CLAMP: f64 = 10.0;

/// Observation model of the decoder, which also fixes how structured inputs
/// (byte vectors) become network features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "type"))]
pub enum Likelihood {
    /// Independent Bernoulli per pixel; inputs are 0/1 bytes.
    Bernoulli { dim: usize },
    /// One categorical per position; inputs are token ids, features one-hot.
    Categorical { positions: usize, classes: usize },
}

impl Likelihood {
    pub fn feature_dim(&self) -> usize {
        match *self {
            Likelihood::Bernoulli { dim } => dim,
            Likelihood::Categorical { positions, classes } => positions * classes,
        }
    }

    /// Length of a structured input.
    pub fn input_len(&self) -> usize {
        match *self {
            Likelihood::Bernoulli { dim } => dim,
            Likelihood::Categorical { positions, .. } => positions,
        }
    }

    pub fn features_into(&self, x: &[u8], out: &mut [f64]) {
        match *self {
            Likelihood::Bernoulli { .. } => {
                for (o, &b) in out.iter_mut().zip(x) {
                    *o = f64::from(b);
                }
            }
            Likelihood::Categorical { classes, .. } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for (p, &t) in x.iter().enumerate() {
                    out[p * classes + usize::from(t)] = 1.0;
                }
            }
        }
    }

    /// Stacks the features of several inputs into a `n × feature_dim` matrix.
    pub fn features<X: AsRef<[u8]>>(&self, xs: &[X]) -> Result<Tensor, VaeError> {
        if xs.is_empty() {
            return Err(VaeError::EmptyBatch);
        }
        let d = self.feature_dim();
        let mut t = Tensor::zeros(xs.len(), d);
        for (r, x) in xs.iter().enumerate() {
            let x = x.as_ref();
            self.validate_input(x)?;
            self.features_into(x, t.row_slice_mut(r));
        }
        Ok(t)
    }

    pub fn validate_input(&self, x: &[u8]) -> Result<(), VaeError> {
        if x.len() != self.input_len() {
            return Err(VaeError::InputShape { expected: self.input_len(), got: x.len() });
        }
        let ok = match *self {
            Likelihood::Bernoulli { .. } => x.iter().all(|&b| b <= 1),
            Likelihood::Categorical { classes, .. } => x.iter().all(|&t| usize::from(t) < classes),
        };
        if ok {
            Ok(())
        } else {
            Err(VaeError::InvalidInput)
        }
    }

    /// Per-datum `log g(x|z)` from output logits, as an `n×1` column.
    pub(crate) fn log_likelihood(&self, tape: &mut Tape, logits: Var, x: Var) -> Result<Var, VaeError> {
        Ok(match *self {
            Likelihood::Bernoulli { .. } => {
                let xl = tape.mul(x, logits)?;
                let sp = tape.softplus(logits)?;
                let ll = tape.sub(xl, sp)?;
                tape.sum_cols(ll)?
            }
            Likelihood::Categorical { classes, .. } => {
                let lsm = tape.log_softmax_groups(logits, classes)?;
                let picked = tape.mul(lsm, x)?;
                tape.sum_cols(picked)?
            }
        })
    }

    /// Distribution parameters for one row of logits: Bernoulli
    /// probabilities, or per-position class probabilities laid out like the
    /// one-hot features.
    pub fn probabilities(&self, logits: &[f64]) -> Vec<f64> {
        match *self {
            Likelihood::Bernoulli { .. } => logits.iter().map(|&l| math::sigmoid(l)).collect(),
            Likelihood::Categorical { classes, .. } => {
                let mut out = logits.to_vec();
                for chunk in out.chunks_mut(classes) {
                    log_softmax_in_place(chunk);
                    chunk.iter_mut().for_each(|v| *v = v.exp());
                }
                out
            }
        }
    }

    /// Draws one structured input from one row of logits.
    pub fn sample<R: Rng + ?Sized>(&self, logits: &[f64], rng: &mut R) -> Vec<u8> {
        let probs = self.probabilities(logits);
        match *self {
            Likelihood::Bernoulli { .. } => probs.iter().map(|&p| u8::from(rng.random::<f64>() < p)).collect(),
            Likelihood::Categorical { classes, .. } => probs
                .chunks(classes)
                .map(|p| {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    for (c, &pc) in p.iter().enumerate() {
                        acc += pc;
                        if u < acc {
                            return c as u8;
                        }
                    }
                    (classes - 1) as u8
                })
                .collect(),
        }
    }

    /// Most likely input (per-pixel threshold or per-position argmax).
    pub fn mode(&self, logits: &[f64]) -> Vec<u8> {
        match *self {
            Likelihood::Bernoulli { .. } => logits.iter().map(|&l| u8::from(l > 0.0)).collect(),
            Likelihood::Categorical { classes, .. } => logits
                .chunks(classes)
                .map(|c| {
                    let mut best = 0;
                    for (i, &v) in c.iter().enumerate() {
                        if v > c[best] {
                            best = i;
                        }
                    }
                    best as u8
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }

    fn tape(self, tape: &mut Tape, v: Var) -> Result<Var, VaeError> {
        Ok(match self {
            Activation::Tanh => tape.tanh(v)?,
            Activation::Relu => tape.relu(v)?,
        })
    }
}

/// MLP encoder/decoder shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Architecture {
    pub likelihood: Likelihood,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub activation: Activation,
    /// Adds a scalar target-prediction head on the decoder's first hidden layer.
    pub target_head: bool,
}

impl Architecture {
    pub fn validate(&self) -> Result<(), VaeError> {
        if self.latent_dim == 0 {
            return Err(VaeError::Architecture("latent dimension must be at least 1"));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            return Err(VaeError::Architecture("hidden widths must be non-empty and positive"));
        }
        if self.likelihood.feature_dim() == 0 {
            return Err(VaeError::Architecture("input dimension must be positive"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every linear layer, in parameter order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let d_in = self.likelihood.feature_dim();
        let mut shapes = Vec::new();
        let mut prev = d_in;
        for &h in &self.hidden {
            shapes.push((prev, h));
            prev = h;
        }
        shapes.push((prev, self.latent_dim));
        shapes.push((prev, self.latent_dim));
        let mut prev = self.latent_dim;
        for &h in self.hidden.iter().rev() {
            shapes.push((prev, h));
            prev = h;
        }
        shapes.push((prev, d_in));
        if self.target_head {
            shapes.push((*self.hidden.last().expect("validated"), 1));
        }
        shapes
    }

    /// Shapes of all parameter tensors (weight then bias per layer).
    pub fn tensor_shapes(&self) -> Vec<[usize; 2]> {
        self.layer_shapes().into_iter().flat_map(|(i, o)| [[i, o], [1, o]]).collect()
    }

    fn n_hidden(&self) -> usize {
        self.hidden.len()
    }
}

/// Encoder `φ`, decoder `θ` and optional target head, as one flat list of
/// weight/bias tensors laid out by [`Architecture::layer_shapes`].
#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    arch: Architecture,
    tensors: Vec<Tensor>,
}

/// Diagonal Gaussian posterior `q(z|x)` for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mean: Tensor,
    pub logvar: Tensor,
}

impl Posterior {
    pub fn variance(&self) -> Tensor {
        self.logvar.map(f64::exp)
    }
}

impl VaeParams {
    /// Glorot-uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self, VaeError> {
        arch.validate()?;
        let mut tensors = Vec::new();
        for (fan_in, fan_out) in arch.layer_shapes() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
            tensors.push(Tensor::from_vec(fan_in, fan_out, data)?);
            tensors.push(Tensor::zeros(1, fan_out));
        }
        Ok(Self { arch, tensors })
    }

    /// Reassembles parameters (e.g. from a checkpoint), checking shapes.
    pub fn from_parts(arch: Architecture, tensors: Vec<Tensor>) -> Result<Self, VaeError> {
        arch.validate()?;
        let shapes = arch.tensor_shapes();
        if shapes.len() != tensors.len() || shapes.iter().zip(&tensors).any(|(s, t)| *s != t.shape()) {
            return Err(VaeError::Architecture("tensor shapes do not match the architecture"));
        }
        if tensors.iter().any(|t| !t.is_finite()) {
            return Err(VaeError::Architecture("non-finite parameter"));
        }
        Ok(Self { arch, tensors })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub fn likelihood(&self) -> Likelihood {
        self.arch.likelihood
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    // Layer indices in `layer_shapes` order.
    fn enc_layer(&self, l: usize) -> usize {
        l
    }
    fn mu_layer(&self) -> usize {
        self.arch.n_hidden()
    }
    fn logvar_layer(&self) -> usize {
        self.arch.n_hidden() + 1
    }
    fn dec_layer(&self, l: usize) -> usize {
        self.arch.n_hidden() + 2 + l
    }
    fn out_layer(&self) -> usize {
        2 * self.arch.n_hidden() + 2
    }
    fn head_layer(&self) -> Option<usize> {
        self.arch.target_head.then(|| 2 * self.arch.n_hidden() + 3)
    }

    fn linear(&self, layer: usize, x: &Tensor) -> Result<Tensor, VaeError> {
        Ok(x.matmul(&self.tensors[2 * layer])?.add_row(&self.tensors[2 * layer + 1])?)
    }

    fn check_features(&self, x: &Tensor) -> Result<(), VaeError> {
        let d = self.arch.likelihood.feature_dim();
        if x.cols() != d {
            return Err(VaeError::InputShape { expected: d, got: x.cols() });
        }
        Ok(())
    }

    fn check_latent(&self, z: &Tensor) -> Result<(), VaeError> {
        if z.cols() != self.arch.latent_dim {
            return Err(VaeError::LatentShape { expected: self.arch.latent_dim, got: z.cols() });
        }
        Ok(())
    }

    /// Unclamped log-variance head output (diagnostics).
    pub fn raw_logvar(&self, x: &Tensor) -> Result<Tensor, VaeError> {
        let h = self.encoder_trunk(x)?;
        self.linear(self.logvar_layer(), &h)
    }

    fn encoder_trunk(&self, x: &Tensor) -> Result<Tensor, VaeError> {
        self.check_features(x)?;
        let act = self.arch.activation;
        let mut h = x.clone();
        for l in 0..self.arch.n_hidden() {
            h = self.linear(self.enc_layer(l), &h)?.map(|v| act.apply(v));
        }
        Ok(h)
    }

    /// `q_φ(z|x)` for a batch of input features.
    pub fn encode(&self, x: &Tensor) -> Result<Posterior, VaeError> {
        let h = self.encoder_trunk(x)?;
        let mean = self.linear(self.mu_layer(), &h)?;
        let logvar = self.linear(self.logvar_layer(), &h)?.map(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP));
        if !mean.is_finite() || !logvar.is_finite() {
            return Err(VaeError::NonFinite { context: "encode" });
        }
        Ok(Posterior { mean, logvar })
    }

    fn decoder_trunk(&self, z: &Tensor) -> Result<(Tensor, Tensor), VaeError> {
        self.check_latent(z)?;
        let act = self.arch.activation;
        let mut h = z.clone();
        let mut first = None;
        for l in 0..self.arch.n_hidden() {
            h = self.linear(self.dec_layer(l), &h)?.map(|v| act.apply(v));
            if l == 0 {
                first = Some(h.clone());
            }
        }
        Ok((h, first.expect("at least one hidden layer")))
    }

    /// Output logits of `g_θ(x|z)` for a batch of latent points.
    pub fn decode_logits(&self, z: &Tensor) -> Result<Tensor, VaeError> {
        let (h, _) = self.decoder_trunk(z)?;
        let out = self.linear(self.out_layer(), &h)?;
        if !out.is_finite() {
            return Err(VaeError::NonFinite { context: "decode" });
        }
        Ok(out)
    }

    /// Decoder distribution parameters (one row per latent point).
    pub fn decode(&self, z: &Tensor) -> Result<Tensor, VaeError> {
        let logits = self.decode_logits(z)?;
        let lk = self.arch.likelihood;
        let mut out = Tensor::zeros(logits.rows(), logits.cols());
        for r in 0..logits.rows() {
            out.row_slice_mut(r).copy_from_slice(&lk.probabilities(logits.row_slice(r)));
        }
        Ok(out)
    }

    /// Draws `x ~ g_θ(·|z)` for one latent point.
    pub fn sample_decode<R: Rng + ?Sized>(&self, z: &[f64], rng: &mut R) -> Result<Vec<u8>, VaeError> {
        let logits = self.decode_logits(&Tensor::row(z))?;
        Ok(self.arch.likelihood.sample(logits.row_slice(0), rng))
    }

    /// Draws `n` independent decodes of the same latent point.
    pub fn sample_decode_many<R: Rng + ?Sized>(&self, z: &[f64], n: usize, rng: &mut R) -> Result<Vec<Vec<u8>>, VaeError> {
        let logits = self.decode_logits(&Tensor::row(z))?;
        let row = logits.row_slice(0);
        Ok((0..n).map(|_| self.arch.likelihood.sample(row, rng)).collect())
    }

    /// Target-head prediction (standardised units) for latent points.
    pub fn predict_target(&self, z: &Tensor) -> Result<Tensor, VaeError> {
        let head = self.head_layer().ok_or(VaeError::MissingTargetHead)?;
        let (_, first) = self.decoder_trunk(z)?;
        self.linear(head, &first)
    }

    /// Registers every parameter tensor as a tape leaf.
    pub(crate) fn bind(&self, tape: &mut Tape) -> Bound<'_> {
        Bound { vars: self.tensors.iter().map(|t| tape.leaf(t.clone())).collect(), params: self }
    }
}

/// Parameters registered on a tape.
pub(crate) struct Bound<'a> {
    pub vars: Vec<Var>,
    params: &'a VaeParams,
}

impl Bound<'_> {
    fn linear(&self, tape: &mut Tape, layer: usize, x: Var) -> Result<Var, VaeError> {
        let h = tape.matmul(x, self.vars[2 * layer])?;
        Ok(tape.add(h, self.vars[2 * layer + 1])?)
    }

    pub fn encode(&self, tape: &mut Tape, x: Var) -> Result<(Var, Var), VaeError> {
        let p = self.params;
        let act = p.arch.activation;
        let mut h = x;
        for l in 0..p.arch.n_hidden() {
            let a = self.linear(tape, p.enc_layer(l), h)?;
            h = act.tape(tape, a)?;
        }
        let mu = self.linear(tape, p.mu_layer(), h)?;
        let lv = self.linear(tape, p.logvar_layer(), h)?;
        let lv = tape.clamp(lv, -LOGVAR_CLAMP, LOGVAR_CLAMP)?;
        Ok((mu, lv))
    }

    /// Returns `(logits, first decoder hidden layer)`.
    pub fn decode(&self, tape: &mut Tape, z: Var) -> Result<(Var, Var), VaeError> {
        let p = self.params;
        let act = p.arch.activation;
        let mut h = z;
        let mut first = z;
        for l in 0..p.arch.n_hidden() {
            let a = self.linear(tape, p.dec_layer(l), h)?;
            h = act.tape(tape, a)?;
            if l == 0 {
                first = h;
            }
        }
        Ok((self.linear(tape, p.out_layer(), h)?, first))
    }

    pub fn target_head(&self, tape: &mut Tape, first_hidden: Var) -> Result<Var, VaeError> {
        let head = self.params.head_layer().ok_or(VaeError::MissingTargetHead)?;
        self.linear(tape, head, first_hidden)
    }
}

/// Standard-normal noise of the given shape.
pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    Tensor::from_vec(rows, cols, data).expect("positive shape")
}
