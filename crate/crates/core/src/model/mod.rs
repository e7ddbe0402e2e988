//! Feed-forward pathway classifier: GELU encoder layers and a linear head.
//!
//! Parameters are plain row-major buffers and backpropagation is written out
//! by hand. One [`PathwayModel`] stands in for one modality pathway; two
//! pathways never share parameters.

mod checkpoint;
mod optim;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use optim::{AdamW, AdamWConfig};
pub use train::{predict, train, EpochRecord, LossKind, TrainConfig, TrainTrace};

use rand::Rng;
use rand_distr::Uniform;

use crate::error::{Error, Result};
use crate::loss::{Label, LossBatch, Objective, ProbVector};
use crate::rng::{substream, Stream};
use crate::scalar::Scalar;

/// Exact GELU, `x · Φ(x)`.
pub fn gelu<T: Scalar>(x: T) -> T {
    x * std_normal_cdf(x)
}

/// `d/dx [x · Φ(x)] = Φ(x) + x · φ(x)`.
pub fn gelu_derivative<T: Scalar>(x: T) -> T {
    let density = (-(x * x) / T::lit(2.0)).exp() / T::lit((2.0 * std::f64::consts::PI).sqrt());
    std_normal_cdf(x) + x * density
}

fn std_normal_cdf<T: Scalar>(x: T) -> T {
    T::lit(0.5) * (T::one() + (x / T::lit(std::f64::consts::SQRT_2)).erf())
}

/// Fully connected layer, `weights` is `d_out × d_in` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub d_in: usize,
    pub d_out: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            d_in,
            d_out,
            weights: vec![T::zero(); d_in * d_out],
            biases: vec![T::zero(); d_out],
        }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.d_in, self.d_out)
    }

    fn row(&self, o: usize) -> &[T] {
        &self.weights[o * self.d_in..(o + 1) * self.d_in]
    }

    fn apply(&self, input: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(
            self.biases
                .iter()
                .enumerate()
                .map(|(o, &b)| b + dot(self.row(o), input)),
        );
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).all(|v| v.is_finite())
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    // four accumulators so the compiler can keep lanes independent
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = T::zero();
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// One modality pathway: encoder layers with GELU, then a linear head.
#[derive(Clone, Debug, PartialEq)]
pub struct PathwayModel<T> {
    pub(crate) encoder: Vec<Dense<T>>,
    pub(crate) head: Dense<T>,
    pub(crate) frozen_encoder: bool,
}

/// One labelled feature vector fed to a pathway.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a, T> {
    pub id: &'a str,
    pub label: Label,
    pub features: &'a [T],
}

/// Logits and probabilities of a single forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Forward<T> {
    pub logits: Vec<T>,
    pub probs: ProbVector<T>,
}

/// Parameter gradients, shaped like the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub encoder: Vec<Dense<T>>,
    pub head: Dense<T>,
}

impl<T: Scalar> Gradients<T> {
    pub(crate) fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(2 * self.encoder.len() + 2);
        for layer in self.encoder.iter().chain(std::iter::once(&self.head)) {
            out.push(layer.weights.as_slice());
            out.push(layer.biases.as_slice());
        }
        out
    }
}

/// Result of [`PathwayModel::backward`].
#[derive(Clone, Debug)]
pub struct BatchGradient<T> {
    pub grads: Gradients<T>,
    pub losses: LossBatch<T>,
    pub clamped: usize,
}

impl<T: Scalar> PathwayModel<T> {
    /// Random initialisation. `dims[0]` is the input width and the remaining
    /// entries are hidden widths; `dims = [8]` gives a head-only model.
    pub fn init(dims: &[usize], num_classes: usize, seed: u64) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Config("model dims must name at least the input width".into()));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::Config(format!("model dimension {pos} is zero")));
        }
        if num_classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {num_classes}")));
        }
        let mut rng = substream(seed, Stream::Init, 0);
        let mut draw = |d_in: usize, d_out: usize| {
            let bound = (6.0 / (d_in + d_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let mut layer = Dense::zeros(d_in, d_out);
            for w in &mut layer.weights {
                *w = T::lit(rng.sample(dist));
            }
            layer
        };
        let encoder = dims.windows(2).map(|w| draw(w[0], w[1])).collect();
        let head = draw(*dims.last().expect("non-empty"), num_classes);
        Ok(Self {
            encoder,
            head,
            frozen_encoder: false,
        })
    }

    /// Assembles a model from explicit layers, checking that widths chain.
    pub fn from_layers(encoder: Vec<Dense<T>>, head: Dense<T>, frozen_encoder: bool) -> Result<Self> {
        let mut width = encoder.first().map_or(head.d_in, |l| l.d_in);
        for (l, layer) in encoder.iter().chain(std::iter::once(&head)).enumerate() {
            if layer.d_in != width
                || layer.weights.len() != layer.d_in * layer.d_out
                || layer.biases.len() != layer.d_out
                || layer.d_in == 0
                || layer.d_out == 0
            {
                return Err(Error::Shape(format!("layer {l} does not chain with its input width {width}")));
            }
            if !layer.is_finite() {
                return Err(Error::NonFinite(format!("layer {l} has non-finite parameters")));
            }
            width = layer.d_out;
        }
        if head.d_out < 2 {
            return Err(Error::Shape("head must emit at least 2 classes".into()));
        }
        Ok(Self {
            encoder,
            head,
            frozen_encoder,
        })
    }

    pub fn with_frozen_encoder(mut self, frozen: bool) -> Self {
        self.frozen_encoder = frozen;
        self
    }

    pub fn frozen_encoder(&self) -> bool {
        self.frozen_encoder
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.first().map_or(self.head.d_in, |l| l.d_in)
    }

    pub fn num_classes(&self) -> usize {
        self.head.d_out
    }

    /// Input width followed by hidden widths.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.encoder.iter().map(|l| l.d_out));
        dims
    }

    pub fn encoder(&self) -> &[Dense<T>] {
        &self.encoder
    }

    pub fn head(&self) -> &Dense<T> {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Dense<T> {
        &mut self.head
    }

    pub fn encoder_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.encoder
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.iter().all(Dense::is_finite) && self.head.is_finite()
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::with_capacity(2 * self.encoder.len() + 2);
        for layer in self.encoder.iter_mut().chain(std::iter::once(&mut self.head)) {
            out.push(layer.weights.as_mut_slice());
            out.push(layer.biases.as_mut_slice());
        }
        out
    }

    pub(crate) fn tensor_lens(&self) -> Vec<usize> {
        self.encoder
            .iter()
            .chain(std::iter::once(&self.head))
            .flat_map(|l| [l.weights.len(), l.biases.len()])
            .collect()
    }

    fn check_input(&self, features: &[T]) -> Result<()> {
        if features.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "feature length {} does not match model input width {}",
                features.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn logits(&self, features: &[T]) -> Result<Vec<T>> {
        self.check_input(features)?;
        let mut x = features.to_vec();
        let mut z = Vec::new();
        for layer in &self.encoder {
            layer.apply(&x, &mut z);
            x.clear();
            x.extend(z.iter().map(|&v| gelu(v)));
        }
        self.head.apply(&x, &mut z);
        Ok(z)
    }

    pub fn forward(&self, features: &[T]) -> Result<Forward<T>> {
        let logits = self.logits(features)?;
        let probs = ProbVector::from_simplex(crate::loss::softmax(&logits));
        Ok(Forward { logits, probs })
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            encoder: self.encoder.iter().map(Dense::zeros_like).collect(),
            head: self.head.zeros_like(),
        }
    }

    /// Mean loss over `batch` and its gradient with respect to every parameter.
    ///
    /// Encoder gradients stay zero when the encoder is frozen.
    pub fn backward(&self, batch: &[Example<'_, T>], objective: &Objective<T>) -> Result<BatchGradient<T>> {
        if batch.is_empty() {
            return Err(Error::Data("backward called with an empty batch".into()));
        }
        let k = self.num_classes();
        for ex in batch {
            self.check_input(ex.features)?;
            if ex.label.index() >= k {
                return Err(Error::Data(format!("label {} outside 0..{k} for sample {}", ex.label.index(), ex.id)));
            }
        }
        // Layer-major passes over the batch keep one weight row hot in cache
        // while it meets every example.
        let n = batch.len();
        let inputs0: Vec<&[T]> = batch.iter().map(|ex| ex.features).collect();
        let mut acts: Vec<Vec<Vec<T>>> = Vec::with_capacity(self.encoder.len());
        let mut pre: Vec<Vec<Vec<T>>> = Vec::with_capacity(self.encoder.len());
        for layer in &self.encoder {
            let z = {
                let xs: Vec<&[T]> = match acts.last() {
                    None => inputs0.clone(),
                    Some(prev) => prev.iter().map(Vec::as_slice).collect(),
                };
                apply_batch(layer, &xs)
            };
            acts.push(z.iter().map(|zb| zb.iter().map(|&v| gelu(v)).collect()).collect());
            pre.push(z);
        }
        let layer_input = |l: usize| -> Vec<&[T]> {
            if l == 0 {
                inputs0.clone()
            } else {
                acts[l - 1].iter().map(Vec::as_slice).collect()
            }
        };
        let head_in = layer_input(self.encoder.len());
        let logits = apply_batch(&self.head, &head_in);

        let mut grads = self.zero_gradients();
        let mut losses = LossBatch::new();
        let mut clamped = 0;
        let mut deltas: Vec<Vec<T>> = Vec::with_capacity(n);
        for (ex, z) in batch.iter().zip(&logits) {
            let eval = objective.evaluate(z, ex.label);
            losses.push(eval.loss);
            clamped += usize::from(eval.clamped);
            deltas.push(eval.grad);
        }
        accumulate_batch(&mut grads.head, &deltas, &head_in);
        if !self.frozen_encoder && !self.encoder.is_empty() {
            let mut upstream = back_batch(&self.head, &deltas);
            for l in (0..self.encoder.len()).rev() {
                for (u, zb) in upstream.iter_mut().zip(&pre[l]) {
                    for (g, &z) in u.iter_mut().zip(zb) {
                        *g *= gelu_derivative(z);
                    }
                }
                accumulate_batch(&mut grads.encoder[l], &upstream, &layer_input(l));
                if l > 0 {
                    upstream = back_batch(&self.encoder[l], &upstream);
                }
            }
        }
        let scale = T::one() / T::from_count(n);
        for layer in grads.encoder.iter_mut().chain(std::iter::once(&mut grads.head)) {
            for v in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *v *= scale;
            }
        }
        Ok(BatchGradient { grads, losses, clamped })
    }
}

/// Pre-activations of `layer` for every input in the batch.
fn apply_batch<T: Scalar>(layer: &Dense<T>, xs: &[&[T]]) -> Vec<Vec<T>> {
    let mut out = vec![vec![T::zero(); layer.d_out]; xs.len()];
    for o in 0..layer.d_out {
        let row = layer.row(o);
        let b0 = layer.biases[o];
        for (x, z) in xs.iter().zip(out.iter_mut()) {
            z[o] = b0 + dot(row, x);
        }
    }
    out
}

/// Adds `Σ_b delta_b ⊗ input_b` to the weights and `Σ_b delta_b` to the biases.
fn accumulate_batch<T: Scalar>(grad: &mut Dense<T>, deltas: &[Vec<T>], inputs: &[&[T]]) {
    let d_in = grad.d_in;
    for o in 0..grad.d_out {
        let row = &mut grad.weights[o * d_in..(o + 1) * d_in];
        for (delta, x) in deltas.iter().zip(inputs) {
            let d = delta[o];
            grad.biases[o] += d;
            if d != T::zero() {
                axpy(d, x, row);
            }
        }
    }
}

/// `Wᵀ delta_b` for every delta in the batch.
fn back_batch<T: Scalar>(layer: &Dense<T>, deltas: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out = vec![vec![T::zero(); layer.d_in]; deltas.len()];
    for o in 0..layer.d_out {
        let row = layer.row(o);
        for (delta, u) in deltas.iter().zip(out.iter_mut()) {
            axpy(delta[o], row, u);
        }
    }
    out
}
