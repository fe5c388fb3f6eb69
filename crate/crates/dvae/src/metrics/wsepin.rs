//! WSEPIN: per-dimension conditional mutual informations, weighted by each
//! dimension's share of marginal information and normalized by its entropy.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vae::VaeModel;

use super::mi::mi_profile;

/// Entropies this small are clamped (and the result flagged) to keep the
/// weighting finite; negative differential entropy would otherwise flip or
/// blow up a term.
pub const ENTROPY_FLOOR: f64 = 1e-3;

/// Total marginal information at or below this level is treated as a
/// collapsed latent: the score is 0 and flagged rather than a noise ratio.
pub const COLLAPSE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WsepinDim {
    pub mi: f64,
    pub conditional_mi: f64,
    pub entropy: f64,
    pub entropy_clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WsepinReport {
    pub value: f64,
    /// Set when the estimate needed a stability convention (collapsed latent
    /// or clamped entropy); the paper-reported failure mode, made explicit.
    pub flagged: bool,
    pub mi_full: f64,
    pub dims: Vec<WsepinDim>,
}

/// Computes WSEPIN for the aggregate posterior of `sample` observations:
/// `sum_j (rho_j / H(s_j)) * max(0, I(x;s) - I(x;s_without_j))` with
/// `rho_j = I(x;s_j) / sum_i I(x;s_i)` (negative marginal MIs floored at 0).
pub fn wsepin(
    model: &VaeModel,
    sample: &Array2<f64>,
    mc_samples: usize,
    seed: u64,
) -> Result<WsepinReport> {
    if model.latent_dim() < 2 {
        return Err(Error::InvalidConfig(format!(
            "WSEPIN needs a latent dimension of at least 2, got {}",
            model.latent_dim()
        )));
    }
    let post = model.encode(sample)?;
    let profile = mi_profile(&post, mc_samples, seed)?;

    let d = profile.per_dim.len();
    let mut dims = Vec::with_capacity(d);
    let mut weight_total = 0.0;
    for j in 0..d {
        let mi = profile.per_dim[j].value;
        let conditional = profile.per_conditional[j].value.max(0.0);
        let entropy = profile.entropy[j].value;
        let entropy_clamped = entropy < ENTROPY_FLOOR;
        weight_total += mi.max(0.0);
        dims.push(WsepinDim {
            mi,
            conditional_mi: conditional,
            entropy,
            entropy_clamped,
        });
    }

    if weight_total <= COLLAPSE_FLOOR {
        return Ok(WsepinReport {
            value: 0.0,
            flagged: true,
            mi_full: profile.full.value,
            dims,
        });
    }

    let mut value = 0.0;
    let mut flagged = false;
    for dim in &dims {
        let rho = dim.mi.max(0.0) / weight_total;
        let entropy = dim.entropy.max(ENTROPY_FLOOR);
        flagged |= dim.entropy_clamped;
        value += rho / entropy * dim.conditional_mi;
    }

    Ok(WsepinReport {
        value,
        flagged,
        mi_full: profile.full.value,
        dims,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseNetwork, Layer};
    use ndarray::{Array1, Array2};

    /// Encoder with fixed weights `w` producing mu = w * x and constant
    /// log-variance; identity-ish decoder to satisfy the model contract.
    pub(crate) fn linear_model(w: Array2<f64>, log_var: f64) -> VaeModel {
        let (d, dx) = w.dim();
        let mut enc_w = Array2::zeros((2 * d, dx));
        for i in 0..d {
            for j in 0..dx {
                enc_w[[i, j]] = w[[i, j]];
            }
        }
        let mut enc_b = Array1::zeros(2 * d);
        for i in d..2 * d {
            enc_b[i] = log_var;
        }
        let encoder =
            DenseNetwork::new(vec![Layer::new(enc_w, enc_b, Activation::Identity).unwrap()])
                .unwrap();
        let decoder = DenseNetwork::new(vec![Layer::new(
            Array2::zeros((dx, d)),
            Array1::zeros(dx),
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        VaeModel::new(encoder, decoder).unwrap()
    }

    fn hypercube_observations(d: usize, scale: f64) -> Array2<f64> {
        let n = 1 << d;
        Array2::from_shape_fn((n, d), |(i, j)| {
            if (i >> j) & 1 == 1 {
                scale
            } else {
                -scale
            }
        })
    }

    #[test]
    fn collapsed_model_returns_flagged_zero() {
        // zero-weight encoder: every posterior identical
        let model = linear_model(Array2::zeros((3, 4)), 0.0);
        let xs = Array2::from_shape_fn((16, 4), |(i, j)| (i * 7 + j) as f64 % 5.0 - 2.0);
        let report = wsepin(&model, &xs, 64, 0).unwrap();
        assert!(report.flagged);
        assert_eq!(report.value, 0.0);
    }

    #[test]
    fn duplicated_dimension_contributes_nothing() {
        // mu = (x0, x0): the two latent dims carry the same tight posterior
        let mut w = Array2::zeros((2, 1));
        w[[0, 0]] = 1.0;
        w[[1, 0]] = 1.0;
        let model = linear_model(w, -9.0);
        let xs = Array2::from_shape_fn((8, 1), |(i, _)| if i % 2 == 0 { 3.0 } else { -3.0 });
        let report = wsepin(&model, &xs, 500, 1).unwrap();
        for dim in &report.dims {
            assert!(
                dim.conditional_mi < 0.05,
                "duplicated dim should add no conditional information: {:?}",
                dim
            );
        }
        assert!(report.value < 0.1, "wsepin = {}", report.value);
    }

    #[test]
    fn axis_aligned_scores_above_rotated() {
        let d = 3;
        let xs = hypercube_observations(d, 1.0);
        let axis = linear_model(Array2::eye(d), -6.0);
        // a fixed generic rotation (Householder-orthogonalized by hand)
        let theta = 0.71f64;
        let mut rot = Array2::eye(d);
        rot[[0, 0]] = theta.cos();
        rot[[0, 1]] = -theta.sin();
        rot[[1, 0]] = theta.sin();
        rot[[1, 1]] = theta.cos();
        let theta2 = 0.41f64;
        let mut rot2 = Array2::eye(d);
        rot2[[1, 1]] = theta2.cos();
        rot2[[1, 2]] = -theta2.sin();
        rot2[[2, 1]] = theta2.sin();
        rot2[[2, 2]] = theta2.cos();
        let mixed = linear_model(rot.dot(&rot2), -6.0);

        let a = wsepin(&axis, &xs, 400, 2).unwrap();
        let b = wsepin(&mixed, &xs, 400, 2).unwrap();
        assert!(
            a.value > b.value,
            "axis-aligned {} should beat rotated {}",
            a.value,
            b.value
        );
    }

    #[test]
    fn needs_at_least_two_dims() {
        let model = linear_model(Array2::eye(1), 0.0);
        let xs = Array2::zeros((4, 1));
        assert!(wsepin(&model, &xs, 8, 0).is_err());
    }
}
