//! Fully connected feed-forward network trained by full-batch gradient steps.
//!
//! Layer `l` maps `a_{l-1}` (row vector, width `fan_in`) to
//! `z_l = a_{l-1} W_l + b_l` with `W_l` stored `fan_in x fan_out` row-major.
//! Hidden layers apply the configured activation (softsign by default), the
//! output layer is affine. The loss is the mean squared error over every
//! sample and output component.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::RealMatrix;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("network needs at least one hidden layer and widths >= 1, got {0:?}")]
    InvalidSpec(Vec<usize>),
    #[error("{what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },
    #[error("layer index {index} out of range ({layers} layers)")]
    LayerIndex { index: usize, layers: usize },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `z / (1 + |z|)`.
    #[default]
    Softsign,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Softsign => z / (1.0 + z.abs()),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Softsign => {
                let d = 1.0 + z.abs();
                1.0 / (d * d)
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// `[d_in, h_1, …, h_L, d_out]`.
    pub widths: Vec<usize>,
    #[serde(default)]
    pub hidden_activation: Activation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>) -> Result<Self, NnError> {
        let spec = Self {
            widths,
            hidden_activation: Activation::Softsign,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.hidden_activation = activation;
        self
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.widths.len() < 3 || self.widths.contains(&0) {
            return Err(NnError::InvalidSpec(self.widths.clone()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated spec")
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }
}

/// Weights (`fan_in x fan_out`, row-major) and biases of one affine layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            biases: vec![0.0; fan_out],
        }
    }

    /// Number of trainable parameters, `fan_in * fan_out + fan_out`.
    pub fn len(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn weight_matrix(&self) -> RealMatrix {
        RealMatrix::from_row_major(self.fan_in, self.fan_out, self.weights.clone())
            .expect("layer weights checked finite")
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).all(|v| v.is_finite())
    }
}

/// Parameter-shaped container for every layer, used for gradients and optimizer moments.
pub type Params = Vec<LayerParams>;

fn zeros_like(layers: &[LayerParams]) -> Params {
    layers.iter().map(|l| LayerParams::zeros(l.fan_in, l.fan_out)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Params,
}

/// Pre-activations `z_l` and activations `a_l` of one forward pass; `a_0` is the input.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

/// Uniform Glorot initialization: weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn xavier_init(spec: &MlpSpec, seed: u64) -> Result<Mlp, NnError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = spec
        .widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)).collect();
            LayerParams {
                fan_in,
                fan_out,
                weights,
                biases: vec![0.0; fan_out],
            }
        })
        .collect();
    Ok(Mlp {
        spec: spec.clone(),
        layers,
    })
}

impl Mlp {
    /// Builds a network from explicit parameters.
    pub fn from_layers(spec: MlpSpec, layers: Params) -> Result<Self, NnError> {
        spec.validate()?;
        if layers.len() != spec.num_layers() {
            return Err(NnError::Shape {
                what: "layer count",
                expected: spec.num_layers(),
                got: layers.len(),
            });
        }
        for (l, (layer, w)) in layers.iter().zip(spec.widths.windows(2)).enumerate() {
            if layer.fan_in != w[0] || layer.fan_out != w[1] {
                return Err(NnError::Shape {
                    what: "layer fan_in * fan_out",
                    expected: w[0] * w[1],
                    got: layer.fan_in * layer.fan_out,
                });
            }
            if layer.weights.len() != w[0] * w[1] || layer.biases.len() != w[1] {
                return Err(NnError::Shape {
                    what: "layer parameter count",
                    expected: w[0] * w[1] + w[1],
                    got: layer.len(),
                });
            }
            if !layer.is_finite() {
                return Err(NnError::NonFinite { layer: l });
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(LayerParams::len).sum()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            Activation::Identity
        } else {
            self.spec.hidden_activation
        }
    }

    fn check_layer(&self, index: usize) -> Result<&LayerParams, NnError> {
        self.layers.get(index).ok_or(NnError::LayerIndex {
            index,
            layers: self.layers.len(),
        })
    }

    /// Forward pass for a single input vector.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache), NnError> {
        if x.len() != self.spec.input_dim() {
            return Err(NnError::Shape {
                what: "input width",
                expected: self.spec.input_dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite { layer: 0 });
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = vec![x.to_vec()];
        for (l, layer) in self.layers.iter().enumerate() {
            let a = post.last().expect("input pushed");
            let mut z = layer.biases.clone();
            for (i, &ai) in a.iter().enumerate() {
                let w_row = &layer.weights[i * layer.fan_out..(i + 1) * layer.fan_out];
                for (zj, &w) in z.iter_mut().zip(w_row) {
                    *zj += ai * w;
                }
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite { layer: l });
            }
            let act = self.activation(l);
            post.push(z.iter().map(|&v| act.apply(v)).collect());
            pre.push(z);
        }
        let y = post.last().expect("output layer").clone();
        Ok((y, ForwardCache { pre, post }))
    }

    /// Batched forward pass, returning `(pre-activations, activations)` per layer.
    fn forward_batch(&self, x: &RealMatrix) -> Result<(Vec<RealMatrix>, Vec<RealMatrix>), NnError> {
        if x.cols() != self.spec.input_dim() {
            return Err(NnError::Shape {
                what: "input width",
                expected: self.spec.input_dim(),
                got: x.cols(),
            });
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = vec![x.clone()];
        for (l, layer) in self.layers.iter().enumerate() {
            let a = post.last().expect("input pushed");
            let mut z = a.matmul(&layer.weight_matrix()).expect("shapes follow spec");
            for i in 0..z.rows() {
                for (zj, &b) in z.row_mut(i).iter_mut().zip(&layer.biases) {
                    *zj += b;
                }
            }
            if z.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite { layer: l });
            }
            let act = self.activation(l);
            let mut a_next = z.clone();
            if act != Activation::Identity {
                a_next.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            pre.push(z);
            post.push(a_next);
        }
        Ok((pre, post))
    }

    /// Network outputs for every row of `x`.
    pub fn predict(&self, x: &RealMatrix) -> Result<RealMatrix, NnError> {
        let (_, mut post) = self.forward_batch(x)?;
        Ok(post.pop().expect("output layer"))
    }

    /// Mean squared error over all samples and outputs.
    pub fn mse(&self, x: &RealMatrix, y: &RealMatrix) -> Result<f64, NnError> {
        check_batch(&self.spec, x, y)?;
        let pred = self.predict(x)?;
        Ok(mean_sq_diff(&pred, y))
    }

    /// Loss and its exact gradient with respect to every weight and bias.
    pub fn loss_and_gradients(&self, x: &RealMatrix, y: &RealMatrix) -> Result<(f64, Params), NnError> {
        check_batch(&self.spec, x, y)?;
        let (pre, post) = self.forward_batch(x)?;
        let out = post.last().expect("output layer");
        let scale = 2.0 / (y.rows() * y.cols()) as f64;
        let mse = mean_sq_diff(out, y);

        // dL/dz of the output layer
        let mut delta = out.clone();
        for (d, t) in delta.as_mut_slice().iter_mut().zip(y.as_slice()) {
            *d = (*d - t) * scale;
        }

        let mut grads = zeros_like(&self.layers);
        for l in (0..self.layers.len()).rev() {
            let a_prev = &post[l];
            let gw = a_prev.transpose_matmul(&delta).expect("shapes follow spec");
            grads[l].weights.copy_from_slice(gw.as_slice());
            for i in 0..delta.rows() {
                for (gb, d) in grads[l].biases.iter_mut().zip(delta.row(i)) {
                    *gb += d;
                }
            }
            if l > 0 {
                let wt = self.layers[l].weight_matrix().transpose();
                let mut next = delta.matmul(&wt).expect("shapes follow spec");
                let act = self.activation(l - 1);
                for (g, &z) in next.as_mut_slice().iter_mut().zip(pre[l - 1].as_slice()) {
                    *g *= act.derivative(z);
                }
                delta = next;
            }
        }
        Ok((mse, grads))
    }

    /// Layer parameters flattened as row-major weights followed by biases.
    pub fn flatten_layer(&self, index: usize) -> Result<Vec<f64>, NnError> {
        let layer = self.check_layer(index)?;
        let mut v = Vec::with_capacity(layer.len());
        v.extend_from_slice(&layer.weights);
        v.extend_from_slice(&layer.biases);
        Ok(v)
    }

    /// Inverse of [`Mlp::flatten_layer`].
    pub fn assign_layer(&mut self, index: usize, w: &[f64]) -> Result<(), NnError> {
        let layer = self.check_layer(index)?;
        let nw = layer.weights.len();
        if w.len() != layer.len() {
            return Err(NnError::Shape {
                what: "flattened layer length",
                expected: layer.len(),
                got: w.len(),
            });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite { layer: index });
        }
        let layer = &mut self.layers[index];
        layer.weights.copy_from_slice(&w[..nw]);
        layer.biases.copy_from_slice(&w[nw..]);
        Ok(())
    }

    /// Row-major weights of one layer, biases excluded.
    pub fn flatten_weights(&self, index: usize) -> Result<Vec<f64>, NnError> {
        Ok(self.check_layer(index)?.weights.clone())
    }

    pub fn assign_weights(&mut self, index: usize, w: &[f64]) -> Result<(), NnError> {
        let expected = self.check_layer(index)?.weights.len();
        if w.len() != expected {
            return Err(NnError::Shape {
                what: "flattened weight length",
                expected,
                got: w.len(),
            });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite { layer: index });
        }
        self.layers[index].weights.copy_from_slice(w);
        Ok(())
    }
}

fn check_batch(spec: &MlpSpec, x: &RealMatrix, y: &RealMatrix) -> Result<(), NnError> {
    if x.rows() != y.rows() {
        return Err(NnError::Shape {
            what: "target rows",
            expected: x.rows(),
            got: y.rows(),
        });
    }
    if y.cols() != spec.output_dim() {
        return Err(NnError::Shape {
            what: "target width",
            expected: spec.output_dim(),
            got: y.cols(),
        });
    }
    Ok(())
}

fn mean_sq_diff(a: &RealMatrix, b: &RealMatrix) -> f64 {
    let n = a.as_slice().len() as f64;
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the network parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub t: u64,
    pub m: Params,
    pub v: Params,
}

impl AdamState {
    pub fn new(model: &Mlp) -> Self {
        Self {
            t: 0,
            m: zeros_like(&model.layers),
            v: zeros_like(&model.layers),
        }
    }

    pub fn reset(&mut self) {
        self.t = 0;
        for p in self.m.iter_mut().chain(self.v.iter_mut()) {
            p.weights.iter_mut().for_each(|x| *x = 0.0);
            p.biases.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

fn check_shapes(model: &Mlp, grads: &[LayerParams]) -> Result<(), NnError> {
    if grads.len() != model.layers.len() {
        return Err(NnError::Shape {
            what: "gradient layer count",
            expected: model.layers.len(),
            got: grads.len(),
        });
    }
    for (p, g) in model.layers.iter().zip(grads) {
        if p.weights.len() != g.weights.len() || p.biases.len() != g.biases.len() {
            return Err(NnError::Shape {
                what: "gradient layer size",
                expected: p.len(),
                got: g.len(),
            });
        }
    }
    Ok(())
}

/// One bias-corrected Adam update.
pub fn adam_step(
    model: &mut Mlp,
    grads: &[LayerParams],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), NnError> {
    check_shapes(model, grads)?;
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (l, layer) in model.layers.iter_mut().enumerate() {
        let g = &grads[l];
        let (m, v) = (&mut state.m[l], &mut state.v[l]);
        let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
        let gs = g.weights.iter().chain(&g.biases);
        let ms = m.weights.iter_mut().chain(m.biases.iter_mut());
        let vs = v.weights.iter_mut().chain(v.biases.iter_mut());
        for (((p, &gi), mi), vi) in params.zip(gs).zip(ms).zip(vs) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

/// Plain gradient descent, `θ ← θ − lr·g`.
pub fn sgd_step(model: &mut Mlp, grads: &[LayerParams], lr: f64) -> Result<(), NnError> {
    check_shapes(model, grads)?;
    for (layer, g) in model.layers.iter_mut().zip(grads) {
        for (p, gi) in layer.weights.iter_mut().zip(&g.weights) {
            *p -= lr * gi;
        }
        for (p, gi) in layer.biases.iter_mut().zip(&g.biases) {
            *p -= lr * gi;
        }
    }
    Ok(())
}

/// Serialized network with optional optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub model: Mlp,
    pub adam: Option<AdamState>,
}

impl Checkpoint {
    pub fn new(model: Mlp, adam: Option<AdamState>, seed: u64) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            seed,
            model,
            adam,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let ck: Checkpoint = serde_json::from_slice(&fs::read(path)?)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(NnError::Version(ck.version));
        }
        let model = Mlp::from_layers(ck.model.spec.clone(), ck.model.layers.clone())?;
        Ok(Self { model, ..ck })
    }
}
