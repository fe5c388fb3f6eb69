//! Dense-network compute layer: forward evaluation, reverse-mode gradients,
//! an adaptive-moment optimizer, and a finite-difference verification harness.

mod adam;
mod checkpoint;
mod gradcheck;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_layers, read_network, write_layers, write_network, FORMAT_VERSION, MAGIC};
pub use gradcheck::finite_difference_check;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

/// Element-wise activation applied after each affine transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative as a function of the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Tanh),
            other => Err(Error::Checkpoint(format!("unknown activation tag {other}"))),
        }
    }
}

/// One dense layer: `y = activation(x W^T + b)`.
///
/// `weights` has shape `(out, in)`, `bias` has length `out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::shape(
                "layer bias",
                weights.nrows(),
                bias.len(),
            ));
        }
        Ok(Layer {
            weights,
            bias,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// A stack of dense layers with chained dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    layers: Vec<Layer>,
}

/// Cached intermediates from a forward pass, consumed by [`DenseNetwork::backward`].
///
/// `activations[0]` is the input batch; `pre_activations[l]` is the affine
/// output of layer `l` before its activation.
pub struct ForwardTrace {
    activations: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("trace has at least the input")
    }
}

/// Per-layer parameter gradients, shape-congruent with a [`DenseNetwork`].
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub layers: Vec<LayerGradient>,
}

#[derive(Debug, Clone)]
pub struct LayerGradient {
    pub d_weights: Array2<f64>,
    pub d_bias: Array1<f64>,
}

impl GradientSet {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        GradientSet {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    d_weights: Array2::zeros(l.weights.raw_dim()),
                    d_bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.d_weights.iter().all(|v| v.is_finite()) && l.d_bias.iter().all(|v| v.is_finite())
        })
    }

    fn congruent_with(&self, net: &DenseNetwork) -> bool {
        self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|(g, l)| {
                g.d_weights.raw_dim() == l.weights.raw_dim() && g.d_bias.raw_dim() == l.bias.raw_dim()
            })
    }
}

/// Gradients returned by a backward pass: parameter gradients plus the
/// gradient of the loss with respect to the input batch (needed to chain
/// networks, e.g. decoder into encoder through the latent).
pub struct Backprop {
    pub grads: GradientSet,
    pub input_grad: Array2<f64>,
}

impl DenseNetwork {
    /// Builds a network, validating that adjacent layer dimensions chain.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyInput("network needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::shape(
                    "layer chaining",
                    format!("layer {} input = {}", i + 1, pair[0].output_dim()),
                    pair[1].input_dim(),
                ));
            }
        }
        Ok(DenseNetwork { layers })
    }

    /// Random network with Xavier-uniform weights and zero biases.
    pub fn random<R: Rng + ?Sized>(
        dims: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidConfig(
                "network needs at least input and output dims".into(),
            ));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            if fan_in == 0 || fan_out == 0 {
                return Err(Error::InvalidConfig("layer dims must be > 0".into()));
            }
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = Array2::from_shape_fn((fan_out, fan_in), |_| {
                rng.gen_range(-limit..limit)
            });
            let activation = if i + 2 == dims.len() {
                output_activation
            } else {
                hidden_activation
            };
            layers.push(Layer::new(weights, Array1::zeros(fan_out), activation)?);
        }
        DenseNetwork::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }

    fn check_input(&self, batch: &Array2<f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::shape(
                "forward input width",
                self.input_dim(),
                format!("{}x{}", batch.nrows(), batch.ncols()),
            ));
        }
        Ok(())
    }

    /// Forward pass keeping the intermediates needed for [`Self::backward`].
    pub fn forward_trace(&self, batch: &Array2<f64>) -> Result<ForwardTrace> {
        self.check_input(batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(batch.clone());
        for layer in &self.layers {
            let prev = activations.last().expect("non-empty");
            let mut z = prev.dot(&layer.weights.t());
            z += &layer.bias;
            let a = z.mapv(|v| layer.activation.apply(v));
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(ForwardTrace {
            activations,
            pre_activations,
        })
    }

    /// Layer-by-layer affine+activation composition; deterministic.
    pub fn forward(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_trace(batch)?.activations.pop().expect("output"))
    }

    /// Reverse-mode gradients of the scalar loss whose output-gradient is
    /// `upstream`, using the cached intermediates of a matching forward pass.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &Array2<f64>) -> Result<Backprop> {
        if trace.activations.len() != self.layers.len() + 1 {
            return Err(Error::shape(
                "backward trace depth",
                self.layers.len() + 1,
                trace.activations.len(),
            ));
        }
        let batch_rows = trace.activations[0].nrows();
        if upstream.nrows() != batch_rows || upstream.ncols() != self.output_dim() {
            return Err(Error::shape(
                "backward upstream gradient",
                format!("{}x{}", batch_rows, self.output_dim()),
                format!("{}x{}", upstream.nrows(), upstream.ncols()),
            ));
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if trace.pre_activations[l].raw_dim() != delta.raw_dim() {
                return Err(Error::shape(
                    "backward cached activations",
                    format!("{:?}", delta.raw_dim()),
                    format!("{:?}", trace.pre_activations[l].raw_dim()),
                ));
            }
            // d loss / d pre-activation
            let delta_pre = &delta * &trace.pre_activations[l].mapv(|z| layer.activation.derivative(z));
            let d_weights = delta_pre.t().dot(&trace.activations[l]);
            let d_bias = delta_pre.sum_axis(Axis(0));
            delta = delta_pre.dot(&layer.weights);
            grads.push(LayerGradient { d_weights, d_bias });
        }
        grads.reverse();
        Ok(Backprop {
            grads: GradientSet { layers: grads },
            input_grad: delta,
        })
    }
}
