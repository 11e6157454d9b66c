//! Dense multilayer perceptrons with hand-written forward and backward
//! passes.
//!
//! Batches are row-major: one sample per row. A layer computes
//! `act(x · Wᵀ + b)` with `W` stored as `out_dim × in_dim`.

mod adam;
mod regressor;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use regressor::{fit_mlp_regressor, MlpRegressor, RegressionMetrics, RegressorConfig};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_LEAKY_ALPHA: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { alpha: f64 },
    Tanh,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn leaky_relu() -> Self {
        Activation::LeakyRelu {
            alpha: DEFAULT_LEAKY_ALPHA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Activation::LeakyRelu { alpha } if !(alpha > 0.0 && alpha < 1.0) => Err(
                Error::validation(format!("leaky_relu alpha must lie in (0, 1), got {alpha}")),
            ),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match *self {
            Activation::LeakyRelu { alpha } => {
                if z >= 0.0 {
                    z
                } else {
                    alpha * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Linear => z,
        }
    }

    /// d act / dz, given both the pre-activation and the activation value.
    #[inline]
    pub fn derivative(&self, z: f64, a: f64) -> f64 {
        match *self {
            Activation::LeakyRelu { alpha } => {
                if z >= 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Linear => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::validation(format!(
                "layer dimensions must be >= 1, got {}x{}",
                self.in_dim, self.out_dim
            )));
        }
        self.activation.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    /// `out_dim × in_dim`
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// Randomly initialized network. Leaky-ReLU layers use He-uniform
    /// bounds, every other activation uses Xavier-uniform; biases start at
    /// zero.
    pub fn init<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        validate_chain(specs)?;
        let layers = specs
            .iter()
            .map(|&spec| {
                let limit = match spec.activation {
                    Activation::LeakyRelu { .. } => (6.0 / spec.in_dim as f64).sqrt(),
                    _ => (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt(),
                };
                let weights =
                    Matrix::from_fn(spec.out_dim, spec.in_dim, |_, _| rng.gen_range(-limit..limit));
                Layer {
                    spec,
                    weights,
                    bias: vec![0.0; spec.out_dim],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Wraps explicit layers after checking shapes and finiteness.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        validate_chain(&specs)?;
        for (i, l) in layers.iter().enumerate() {
            if l.weights.shape() != (l.spec.out_dim, l.spec.in_dim) || l.bias.len() != l.spec.out_dim {
                return Err(Error::validation(format!("layer {i} parameter shapes do not match its spec")));
            }
            if !l.weights.is_finite() || !l.bias.iter().all(|b| b.is_finite()) {
                return Err(Error::validation(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").spec.out_dim
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Mutable views of every parameter tensor in `[w0, b0, w1, b1, ..]` order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            out.push(l.weights.data_mut());
            out.push(l.bias.as_mut_slice());
        }
        out
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.data().len(), l.bias.len()])
            .collect()
    }

    /// Forward pass without keeping a cache.
    pub fn infer(&self, batch: &Matrix) -> Result<Matrix> {
        forward(self, batch).map(|(out, _)| out)
    }
}

fn validate_chain(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::validation("an MLP needs at least one layer"));
    }
    for s in specs {
        s.validate()?;
    }
    for (i, w) in specs.windows(2).enumerate() {
        if w[0].out_dim != w[1].in_dim {
            return Err(Error::validation(format!(
                "layer {i} outputs {} values but layer {} expects {}",
                w[0].out_dim,
                i + 1,
                w[1].in_dim
            )));
        }
    }
    Ok(())
}

/// Per-layer values recorded by [`forward`] for use in [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Matrix>,
    /// Pre-activations.
    pre: Vec<Matrix>,
    /// Post-activations.
    post: Vec<Matrix>,
}

pub fn forward(params: &MlpParams, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
    if batch.cols() != params.input_dim() {
        return Err(Error::Dimension {
            context: "forward input columns",
            expected: params.input_dim(),
            got: batch.cols(),
        });
    }
    let n_layers = params.layers.len();
    let mut cache = ForwardCache {
        inputs: Vec::with_capacity(n_layers),
        pre: Vec::with_capacity(n_layers),
        post: Vec::with_capacity(n_layers),
    };
    let mut x = batch.clone();
    for layer in &params.layers {
        let mut z = x.matmul_t(&layer.weights)?;
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        let act = layer.spec.activation;
        let a = z.map(|v| act.apply(v));
        cache.inputs.push(x);
        cache.pre.push(z);
        x = a.clone();
        cache.post.push(a);
    }
    Ok((x, cache))
}

/// Gradients of a scalar loss with respect to every parameter and to the
/// network input.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub input: Matrix,
}

impl MlpGrads {
    /// Read-only views in the same order as [`MlpParams::tensors_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.data(), b.as_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
            && self.biases.iter().flatten().all(|v| v.is_finite())
            && self.input.is_finite()
    }
}

/// Backpropagates `grad_output` (dLoss/dOutput, one row per sample).
pub fn backward(params: &MlpParams, cache: &ForwardCache, grad_output: &Matrix) -> Result<MlpGrads> {
    let n_layers = params.layers.len();
    if cache.pre.len() != n_layers {
        return Err(Error::validation(format!(
            "cache holds {} layers but the network has {n_layers}",
            cache.pre.len()
        )));
    }
    for (i, layer) in params.layers.iter().enumerate() {
        if cache.pre[i].cols() != layer.spec.out_dim || cache.inputs[i].cols() != layer.spec.in_dim {
            return Err(Error::validation(format!("cache layer {i} does not match network shapes")));
        }
    }
    let out = &cache.post[n_layers - 1];
    if grad_output.shape() != out.shape() {
        return Err(Error::Dimension {
            context: "backward grad_output",
            expected: out.rows() * out.cols(),
            got: grad_output.rows() * grad_output.cols(),
        });
    }

    let mut weights = vec![Matrix::zeros(0, 0); n_layers];
    let mut biases = vec![Vec::new(); n_layers];
    let mut upstream = grad_output.clone();
    for i in (0..n_layers).rev() {
        let layer = &params.layers[i];
        let act = layer.spec.activation;
        let pre = &cache.pre[i];
        let post = &cache.post[i];
        // dL/dz
        let mut delta = upstream;
        for (d, (&z, &a)) in delta.data_mut().iter_mut().zip(pre.data().iter().zip(post.data())) {
            *d *= act.derivative(z, a);
        }
        weights[i] = delta.t_matmul(&cache.inputs[i])?;
        let mut db = vec![0.0; layer.spec.out_dim];
        for r in 0..delta.rows() {
            for (acc, v) in db.iter_mut().zip(delta.row(r)) {
                *acc += v;
            }
        }
        biases[i] = db;
        upstream = delta.matmul(&layer.weights)?;
    }
    Ok(MlpGrads {
        weights,
        biases,
        input: upstream,
    })
}

/// Mean binary cross-entropy on logits, with the gradient
/// `(sigmoid(logit) - label) / n`. Uses the `max(x, 0) - x·y + ln(1 + e^-|x|)`
/// form so large logits neither overflow nor lose the loss.
pub fn bce_with_logits(logits: &[f64], labels: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(logits.len(), labels.len(), "logits and labels must have equal length");
    let n = logits.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&x, &y) in logits.iter().zip(labels) {
        debug_assert!(y == 0.0 || y == 1.0, "labels must be 0 or 1");
        loss += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
        grad.push((sigmoid(x) - y) / n);
    }
    (loss / n, grad)
}
