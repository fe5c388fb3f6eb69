//! Minibatch estimators of the three KL components (mutual information,
//! total correlation, dimension-wise KL) and their exact gradients.
//!
//! The aggregate posterior over the latent is approximated by a stratified
//! mixture of the minibatch posteriors: the sample's own component carries
//! its true dataset share `1/N`, the remaining `B-1` components stand in for
//! the other `N-1` datapoints with weight `(N-1)/(N*(B-1))` each. The
//! weights sum to one, so a batch of identical posteriors recovers the
//! single-component density exactly, and at `B = N` the mixture is the full
//! aggregate posterior. All densities go through log-sum-exp.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::LN_2PI;

use super::GaussianPosterior;

/// Log mixture weights `(own, cross)` for batch size `b` over a dataset of
/// `n` points.
fn log_weights(b: usize, n: usize) -> (f64, f64) {
    let n = n as f64;
    let own = -n.ln();
    let cross = (n - 1.0).ln() - n.ln() - ((b - 1) as f64).ln();
    (own, cross)
}

/// Shared state between the estimate and its backward pass.
pub(crate) struct Decomposition {
    b: usize,
    d: usize,
    /// log N(s_bj; mu_mj, var_mj), layout `[(b * B + m) * D + j]`.
    log_density: Vec<f64>,
    log_w_own: f64,
    log_w_cross: f64,
    /// `w_bm + sum_j l_bmj`, layout `[b * B + m]`.
    joint_logit: Vec<f64>,
    /// `logsumexp_m(joint_logit)`, length B.
    joint_lse: Vec<f64>,
    /// `logsumexp_m(w_bm + l_bmj)`, layout `[b * D + j]`.
    marginal_lse: Vec<f64>,
    pub mi: f64,
    pub tc: f64,
    pub dkl: f64,
}

pub(crate) struct DecompositionGrads {
    pub d_samples: Array2<f64>,
    pub d_mu: Array2<f64>,
    pub d_log_var: Array2<f64>,
}

impl Decomposition {
    /// Evaluates all three terms for latent samples `s` drawn from the
    /// per-row posteriors `(mu, log_var)`.
    pub(crate) fn evaluate(
        mu: &Array2<f64>,
        log_var: &Array2<f64>,
        samples: &Array2<f64>,
        dataset_size: usize,
    ) -> Result<Self> {
        let (b, d) = mu.dim();
        if b < 2 {
            return Err(Error::InvalidConfig(format!(
                "decomposition estimator needs batch size >= 2, got {b}"
            )));
        }
        if dataset_size == 0 {
            return Err(Error::InvalidConfig("dataset_size must be >= 1".into()));
        }
        if log_var.dim() != (b, d) || samples.dim() != (b, d) {
            return Err(Error::shape(
                "decomposition inputs",
                format!("{b}x{d}"),
                format!("{:?} / {:?}", log_var.dim(), samples.dim()),
            ));
        }

        let (log_w_own, log_w_cross) = log_weights(b, dataset_size);
        let inv_var: Vec<f64> = log_var.iter().map(|lv| (-lv).exp()).collect();
        let mu_s = mu.as_slice().expect("contiguous");
        let lv_s = log_var.as_slice().expect("contiguous");
        let s_s = samples.as_slice().expect("contiguous");

        let mut log_density = vec![0.0f64; b * b * d];
        let mut joint_logit = vec![0.0f64; b * b];
        for bi in 0..b {
            for m in 0..b {
                let w = if m == bi { log_w_own } else { log_w_cross };
                let mut joint = w;
                for j in 0..d {
                    let r = s_s[bi * d + j] - mu_s[m * d + j];
                    let l = -0.5 * (LN_2PI + lv_s[m * d + j] + r * r * inv_var[m * d + j]);
                    log_density[(bi * b + m) * d + j] = l;
                    joint += l;
                }
                joint_logit[bi * b + m] = joint;
            }
        }

        let mut joint_lse = vec![0.0f64; b];
        let mut scratch = vec![0.0f64; b];
        for bi in 0..b {
            scratch.copy_from_slice(&joint_logit[bi * b..(bi + 1) * b]);
            joint_lse[bi] = crate::linalg::logsumexp(&scratch);
        }

        let mut marginal_lse = vec![0.0f64; b * d];
        for bi in 0..b {
            for j in 0..d {
                for m in 0..b {
                    let w = if m == bi { log_w_own } else { log_w_cross };
                    scratch[m] = w + log_density[(bi * b + m) * d + j];
                }
                marginal_lse[bi * d + j] = crate::linalg::logsumexp(&scratch);
            }
        }

        let bf = b as f64;
        let mut mi = 0.0;
        let mut tc = 0.0;
        let mut dkl = 0.0;
        for bi in 0..b {
            let own: f64 = (0..d).map(|j| log_density[(bi * b + bi) * d + j]).sum();
            let marg_sum: f64 = (0..d).map(|j| marginal_lse[bi * d + j]).sum();
            let prior: f64 = (0..d)
                .map(|j| {
                    let s = s_s[bi * d + j];
                    -0.5 * (LN_2PI + s * s)
                })
                .sum();
            mi += own - joint_lse[bi];
            tc += joint_lse[bi] - marg_sum;
            dkl += marg_sum - prior;
        }
        mi /= bf;
        tc /= bf;
        dkl /= bf;

        Ok(Decomposition {
            b,
            d,
            log_density,
            log_w_own,
            log_w_cross,
            joint_logit,
            joint_lse,
            marginal_lse,
            mi,
            tc,
            dkl,
        })
    }

    /// Gradients of `alpha*mi + beta*tc + gamma*dkl` with respect to the
    /// samples, posterior means, and posterior log-variances.
    ///
    /// The sample gradient covers only the direct density dependence; the
    /// caller chains it through the reparameterization.
    pub(crate) fn backward(
        &self,
        mu: &Array2<f64>,
        log_var: &Array2<f64>,
        samples: &Array2<f64>,
        alpha: f64,
        beta: f64,
        gamma: f64,
    ) -> DecompositionGrads {
        let (b, d) = (self.b, self.d);
        let bf = b as f64;
        let own_coef = alpha / bf;
        let joint_coef = (beta - alpha) / bf;
        let marg_coef = (gamma - beta) / bf;
        let prior_coef = -gamma / bf;

        let mu_s = mu.as_slice().expect("contiguous");
        let lv_s = log_var.as_slice().expect("contiguous");
        let s_s = samples.as_slice().expect("contiguous");
        let inv_var: Vec<f64> = lv_s.iter().map(|lv| (-lv).exp()).collect();

        let mut d_s = vec![0.0f64; b * d];
        let mut d_mu = vec![0.0f64; b * d];
        let mut d_lv = vec![0.0f64; b * d];

        for bi in 0..b {
            for m in 0..b {
                let w = if m == bi { self.log_w_own } else { self.log_w_cross };
                let softmax_joint = (self.joint_logit[bi * b + m] - self.joint_lse[bi]).exp();
                let own_part = if m == bi { own_coef } else { 0.0 };
                for j in 0..d {
                    let l = self.log_density[(bi * b + m) * d + j];
                    let softmax_marg = (w + l - self.marginal_lse[bi * d + j]).exp();
                    let omega = own_part + joint_coef * softmax_joint + marg_coef * softmax_marg;
                    if omega == 0.0 {
                        continue;
                    }
                    let r = s_s[bi * d + j] - mu_s[m * d + j];
                    let rp = r * inv_var[m * d + j];
                    d_s[bi * d + j] -= omega * rp;
                    d_mu[m * d + j] += omega * rp;
                    d_lv[m * d + j] += omega * 0.5 * (r * rp - 1.0);
                }
            }
            // prior term of dkl: -gamma/B * d/ds log p(s) = +gamma/B * s
            for j in 0..d {
                d_s[bi * d + j] -= prior_coef * s_s[bi * d + j];
            }
        }

        DecompositionGrads {
            d_samples: Array2::from_shape_vec((b, d), d_s).expect("sized"),
            d_mu: Array2::from_shape_vec((b, d), d_mu).expect("sized"),
            d_log_var: Array2::from_shape_vec((b, d), d_lv).expect("sized"),
        }
    }
}

/// Minibatch estimates `(mi_hat, tc_hat, dkl_hat)` of the KL decomposition.
///
/// `samples` must have been drawn from `post` via [`super::reparameterize`];
/// `dataset_size` is the number of datapoints the minibatch was drawn from.
pub fn estimate_decomposition(
    post: &GaussianPosterior,
    samples: &Array2<f64>,
    dataset_size: usize,
) -> Result<(f64, f64, f64)> {
    let eval = Decomposition::evaluate(post.mu(), post.log_var(), samples, dataset_size)?;
    Ok((eval.mi, eval.tc, eval.dkl))
}
