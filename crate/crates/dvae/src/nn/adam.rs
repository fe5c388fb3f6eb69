//! Bias-corrected adaptive-moment optimizer.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

use super::{DenseNetwork, GradientSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..AdamConfig::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m_weights: Vec<Array2<f64>>,
    v_weights: Vec<Array2<f64>>,
    m_bias: Vec<Array1<f64>>,
    v_bias: Vec<Array1<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(net: &DenseNetwork, config: AdamConfig) -> Self {
        AdamState {
            config,
            m_weights: net.layers().iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            v_weights: net.layers().iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            m_bias: net.layers().iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
            v_bias: net.layers().iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One optimizer step. Rejects non-finite gradients without touching the
/// network or the state.
pub fn adam_step(net: &mut DenseNetwork, grads: &GradientSet, state: &mut AdamState) -> Result<()> {
    if !grads.congruent_with(net) {
        return Err(Error::shape(
            "adam gradients",
            net.layers().len(),
            grads.layers.len(),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::NonFiniteGradient("adam_step"));
    }

    state.t += 1;
    let c = state.config;
    let bc1 = 1.0 - c.beta1.powi(state.t as i32);
    let bc2 = 1.0 - c.beta2.powi(state.t as i32);

    for (l, (layer, grad)) in net.layers_mut().iter_mut().zip(&grads.layers).enumerate() {
        update(
            layer.weights.as_slice_mut().expect("contiguous"),
            grad.d_weights.as_slice().expect("contiguous"),
            state.m_weights[l].as_slice_mut().expect("contiguous"),
            state.v_weights[l].as_slice_mut().expect("contiguous"),
            c,
            bc1,
            bc2,
        );
        update(
            layer.bias.as_slice_mut().expect("contiguous"),
            grad.d_bias.as_slice().expect("contiguous"),
            state.m_bias[l].as_slice_mut().expect("contiguous"),
            state.v_bias[l].as_slice_mut().expect("contiguous"),
            c,
            bc1,
            bc2,
        );
    }

    if !net.all_finite() {
        return Err(Error::NonFiniteGradient("adam_step produced non-finite parameters"));
    }
    Ok(())
}

fn update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], c: AdamConfig, bc1: f64, bc2: f64) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
    }
}
