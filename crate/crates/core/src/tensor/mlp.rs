//! Dense feed-forward network with explicit per-layer parameters.
//!
//! Layer `l` maps activation `h_l` to `h_{l+1}`. Hidden layers apply the
//! configured nonlinearity followed by inverted dropout (train mode only);
//! the final layer is linear and produces logits.
//!
//! Forward passes can run over any contiguous span of layers, which is what
//! Manifold Mixup needs: run two batches up to a hidden layer, mix, continue.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::rng::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation.
    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input dimension first, output dimension last.
    pub layer_sizes: Vec<usize>,
    /// One entry per hidden layer.
    pub activations: Vec<Activation>,
    pub dropout_rate: f64,
}

impl MlpSpec {
    /// Spec with the same activation on every hidden layer.
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, dropout_rate: f64) -> Result<Self> {
        let hidden = layer_sizes.len().saturating_sub(2);
        let spec = Self {
            layer_sizes,
            activations: vec![activation; hidden],
            dropout_rate,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::invalid("an MLP needs at least input and output sizes"));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        if self.activations.len() != self.layer_sizes.len() - 2 {
            return Err(Error::invalid(format!(
                "{} activations for {} hidden layers",
                self.activations.len(),
                self.layer_sizes.len() - 2
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    /// Number of weight layers.
    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn num_hidden(&self) -> usize {
        self.layer_sizes.len() - 2
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    weights: Vec<Matrix>,
    biases: Vec<Matrix>,
}

/// What one layer saw during a forward pass.
#[derive(Debug, Clone)]
struct LayerRecord {
    input: Matrix,
    pre: Matrix,
    mask: Option<Matrix>,
}

/// Activation record of a forward pass over layers `start..start + n`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    start: usize,
    records: Vec<LayerRecord>,
}

impl ForwardCache {
    pub fn start_layer(&self) -> usize {
        self.start
    }

    pub fn end_layer(&self) -> usize {
        self.start + self.records.len()
    }
}

/// Parameter-shaped gradient (or velocity) buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Matrix>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: net
                .biases
                .iter()
                .map(|b| Matrix::zeros(b.rows(), b.cols()))
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, scale: f64, other: &Gradients) -> Result<()> {
        if self.weights.len() != other.weights.len() {
            return Err(Error::shape("Gradients::add_scaled", "layer count differs"));
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.axpy(scale, b)?;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.axpy(scale, b)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).all(Matrix::is_finite)
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .fold(0.0, |m, g| m.max(g.max_abs()))
    }

    /// Flattened in the same order as [`Mlp::param`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b.data());
        }
        out
    }
}

/// Output of [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Backprop {
    pub grads: Gradients,
    /// Gradient with respect to the input of the first layer in the span.
    pub input_grad: Matrix,
}

impl Mlp {
    /// Glorot-uniform weights for tanh layers, He-uniform for relu layers,
    /// zero biases.
    pub fn new(spec: MlpSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut weights = Vec::with_capacity(spec.num_layers());
        let mut biases = Vec::with_capacity(spec.num_layers());
        for (l, w) in spec.layer_sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            // the output layer feeds softmax/MSE, scale like its input activation
            let act = spec
                .activations
                .get(l)
                .or_else(|| l.checked_sub(1).and_then(|p| spec.activations.get(p)))
                .copied()
                .unwrap_or(Activation::Tanh);
            let limit = match act {
                Activation::Tanh => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                Activation::Relu => (6.0 / fan_in as f64).sqrt(),
            };
            let data = (0..fan_in * fan_out)
                .map(|_| (2.0 * rng.uniform() - 1.0) * limit)
                .collect();
            weights.push(Matrix::from_vec(fan_in, fan_out, data)?);
            biases.push(Matrix::zeros(1, fan_out));
        }
        Ok(Self {
            spec,
            weights,
            biases,
        })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let weights = spec
            .layer_sizes
            .windows(2)
            .map(|w| Matrix::zeros(w[0], w[1]))
            .collect();
        let biases = spec
            .layer_sizes
            .windows(2)
            .map(|w| Matrix::zeros(1, w[1]))
            .collect();
        Ok(Self {
            spec,
            weights,
            biases,
        })
    }

    pub fn from_parts(spec: MlpSpec, weights: Vec<Matrix>, biases: Vec<Matrix>) -> Result<Self> {
        spec.validate()?;
        if weights.len() != spec.num_layers() || biases.len() != spec.num_layers() {
            return Err(Error::shape(
                "Mlp::from_parts",
                format!(
                    "{} weight and {} bias blocks for {} layers",
                    weights.len(),
                    biases.len(),
                    spec.num_layers()
                ),
            ));
        }
        for (l, w) in spec.layer_sizes.windows(2).enumerate() {
            if weights[l].shape() != (w[0], w[1]) || biases[l].shape() != (1, w[1]) {
                return Err(Error::shape(
                    "Mlp::from_parts",
                    format!(
                        "layer {l}: weight {:?}, bias {:?}, expected ({}, {}) and (1, {})",
                        weights[l].shape(),
                        biases[l].shape(),
                        w[0],
                        w[1],
                        w[1]
                    ),
                ));
            }
            if !weights[l].is_finite() || !biases[l].is_finite() {
                return Err(Error::NonFinite(format!("layer {l} parameters")));
            }
        }
        Ok(Self {
            spec,
            weights,
            biases,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Matrix] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Matrix] {
        &mut self.biases
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    fn param_slot(&self, mut index: usize) -> (usize, bool, usize) {
        for l in 0..self.weights.len() {
            let nw = self.weights[l].data().len();
            if index < nw {
                return (l, false, index);
            }
            index -= nw;
            let nb = self.biases[l].data().len();
            if index < nb {
                return (l, true, index);
            }
            index -= nb;
        }
        panic!("parameter index out of range");
    }

    /// Flat parameter access: per layer, weights (row-major) then biases.
    pub fn param(&self, index: usize) -> f64 {
        let (l, bias, i) = self.param_slot(index);
        if bias {
            self.biases[l].data()[i]
        } else {
            self.weights[l].data()[i]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (l, bias, i) = self.param_slot(index);
        if bias {
            self.biases[l].data_mut()[i] = value;
        } else {
            self.weights[l].data_mut()[i] = value;
        }
    }

    pub fn forward(&self, x: &Matrix, mode: Mode, rng: &mut Rng) -> Result<(Matrix, ForwardCache)> {
        self.forward_span(x, 0, self.spec.num_layers(), mode, rng)
    }

    /// Deterministic eval-mode forward without a cache.
    pub fn predict_logits(&self, x: &Matrix) -> Result<Matrix> {
        // eval mode never draws from the generator
        let mut rng = Rng::new(0);
        Ok(self.forward(x, Mode::Eval, &mut rng)?.0)
    }

    /// Runs layers `start..end` on activation `h` (the input of layer
    /// `start`). `end == num_layers` yields logits.
    pub fn forward_span(
        &self,
        h: &Matrix,
        start: usize,
        end: usize,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Matrix, ForwardCache)> {
        let layers = self.spec.num_layers();
        if start > end || end > layers {
            return Err(Error::invalid(format!(
                "layer span {start}..{end} outside 0..{layers}"
            )));
        }
        let expected = self.spec.layer_sizes[start];
        if h.cols() != expected {
            return Err(Error::shape(
                "Mlp::forward",
                format!("input has {} columns, layer {start} expects {expected}", h.cols()),
            ));
        }
        let mut records = Vec::with_capacity(end - start);
        let mut current = h.clone();
        for l in start..end {
            let mut pre = current.matmul(&self.weights[l])?;
            pre.add_row_vector(&self.biases[l])?;
            let (out, mask) = if l + 1 < layers {
                let act = self.spec.activations[l];
                let mut out = pre.map(|v| act.apply(v));
                let mask = match mode {
                    Mode::Train if self.spec.dropout_rate > 0.0 => {
                        let p = self.spec.dropout_rate;
                        let keep = 1.0 / (1.0 - p);
                        let m = Matrix::from_vec(
                            out.rows(),
                            out.cols(),
                            (0..out.rows() * out.cols())
                                .map(|_| if rng.uniform() < p { 0.0 } else { keep })
                                .collect(),
                        )?;
                        out = out.hadamard(&m)?;
                        Some(m)
                    }
                    _ => None,
                };
                (out, mask)
            } else {
                (pre.clone(), None)
            };
            records.push(LayerRecord {
                input: current,
                pre,
                mask,
            });
            current = out;
        }
        Ok((current, ForwardCache { start, records }))
    }

    /// Backpropagates `grad_out` (gradient w.r.t. the span's output) through
    /// the layers recorded in `cache`. Layers outside the span get zero
    /// gradients.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Matrix) -> Result<Backprop> {
        let layers = self.spec.num_layers();
        if cache.end_layer() > layers {
            return Err(Error::shape("Mlp::backward", "cache spans more layers than the network"));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = grad_out.clone();
        for (offset, rec) in cache.records.iter().enumerate().rev() {
            let l = cache.start + offset;
            if rec.input.cols() != self.weights[l].rows() || rec.pre.cols() != self.weights[l].cols() {
                return Err(Error::shape(
                    "Mlp::backward",
                    format!("cache for layer {l} does not match the network"),
                ));
            }
            if delta.shape() != rec.pre.shape() {
                return Err(Error::shape(
                    "Mlp::backward",
                    format!(
                        "gradient {:?} vs layer {l} output {:?}",
                        delta.shape(),
                        rec.pre.shape()
                    ),
                ));
            }
            if l + 1 < layers {
                if let Some(mask) = &rec.mask {
                    delta = delta.hadamard(mask)?;
                }
                let act = self.spec.activations[l];
                delta = delta.zip_map(&rec.pre, |d, p| d * act.derivative(p))?;
            }
            grads.weights[l] = rec.input.t_matmul(&delta)?;
            grads.biases[l] = delta.column_sums();
            delta = delta.matmul_t(&self.weights[l])?;
        }
        Ok(Backprop {
            grads,
            input_grad: delta,
        })
    }
}
