//! Single-batch objective evaluation with exact gradients for both
//! objectives. Gradients flow decoder -> latent -> encoder through the
//! reparameterization, plus the direct dependence of the density estimators
//! on the posterior parameters.

use ndarray::{concatenate, s, Array2, Axis};

use crate::error::{Error, Result};
use crate::nn::GradientSet;

use super::decomposition::Decomposition;
use super::{
    analytic_kl_raw, beta_vae_loss, reconstruction_loss, tcvae_loss, LossBreakdown, LossWeights,
    VaeModel, LOG_VAR_CLAMP,
};

pub struct StepOutput {
    pub breakdown: LossBreakdown,
    pub encoder_grads: GradientSet,
    pub decoder_grads: GradientSet,
}

struct ForwardPass {
    enc_trace: crate::nn::ForwardTrace,
    dec_trace: crate::nn::ForwardTrace,
    mu: Array2<f64>,
    log_var: Array2<f64>,
    clamp_mask: Array2<f64>,
    latent: Array2<f64>,
    rec: f64,
}

fn run_forward(model: &VaeModel, x: &Array2<f64>, noise: &Array2<f64>) -> Result<ForwardPass> {
    let d = model.latent_dim();
    if noise.nrows() != x.nrows() || noise.ncols() != d {
        return Err(Error::shape(
            "step noise",
            format!("{}x{}", x.nrows(), d),
            format!("{}x{}", noise.nrows(), noise.ncols()),
        ));
    }
    let enc_trace = model.encoder.forward_trace(x)?;
    let h = enc_trace.output();
    let mu = h.slice(s![.., ..d]).to_owned();
    let log_var_raw = h.slice(s![.., d..]).to_owned();
    let log_var = log_var_raw.mapv(|v| v.clamp(-LOG_VAR_CLAMP, LOG_VAR_CLAMP));
    let clamp_mask = log_var_raw.mapv(|v| if v.abs() <= LOG_VAR_CLAMP { 1.0 } else { 0.0 });
    let latent = &mu + &(log_var.mapv(|v| (0.5 * v).exp()) * noise);
    let dec_trace = model.decoder.forward_trace(&latent)?;
    let rec = reconstruction_loss(x, dec_trace.output())?;
    Ok(ForwardPass {
        enc_trace,
        dec_trace,
        mu,
        log_var,
        clamp_mask,
        latent,
        rec,
    })
}

/// Backpropagates a latent gradient through the reparameterization and the
/// encoder, combining it with direct gradients on `(mu, log_var)`.
fn encoder_backward(
    model: &VaeModel,
    fwd: &ForwardPass,
    noise: &Array2<f64>,
    d_latent: &Array2<f64>,
    d_mu_direct: Array2<f64>,
    d_log_var_direct: Array2<f64>,
) -> Result<GradientSet> {
    let d_mu = d_mu_direct + d_latent;
    let sigma_half = fwd.log_var.mapv(|v| 0.5 * (0.5 * v).exp());
    let mut d_log_var = d_log_var_direct + &(d_latent * &sigma_half * noise);
    d_log_var *= &fwd.clamp_mask;
    let upstream = concatenate(Axis(1), &[d_mu.view(), d_log_var.view()])
        .expect("mu/log_var halves share shape");
    Ok(model.encoder.backward(&fwd.enc_trace, &upstream)?.grads)
}

/// One TC-VAE objective evaluation with gradients:
/// `rec + alpha*mi + beta*tc + gamma*dkl`.
pub fn tcvae_step(
    model: &VaeModel,
    x: &Array2<f64>,
    noise: &Array2<f64>,
    weights: &LossWeights,
    dataset_size: usize,
) -> Result<StepOutput> {
    let fwd = run_forward(model, x, noise)?;
    let b = x.nrows() as f64;

    let d_xhat = (fwd.dec_trace.output() - x) / b;
    let dec_bp = model.decoder.backward(&fwd.dec_trace, &d_xhat)?;

    let decomp = Decomposition::evaluate(&fwd.mu, &fwd.log_var, &fwd.latent, dataset_size)?;
    let est_grads = decomp.backward(
        &fwd.mu,
        &fwd.log_var,
        &fwd.latent,
        weights.alpha,
        weights.beta,
        weights.gamma,
    );

    let d_latent = dec_bp.input_grad + est_grads.d_samples;
    let encoder_grads = encoder_backward(
        model,
        &fwd,
        noise,
        &d_latent,
        est_grads.d_mu,
        est_grads.d_log_var,
    )?;

    let kl_analytic = analytic_kl_raw(&fwd.mu, &fwd.log_var);
    let total = tcvae_loss(fwd.rec, decomp.mi, decomp.tc, decomp.dkl, weights);
    Ok(StepOutput {
        breakdown: LossBreakdown {
            rec: fwd.rec,
            mi_hat: decomp.mi,
            tc_hat: decomp.tc,
            dkl_hat: decomp.dkl,
            kl_analytic,
            total,
        },
        encoder_grads,
        decoder_grads: dec_bp.grads,
    })
}

/// One beta-VAE objective evaluation with gradients:
/// `rec + beta_s * analytic KL`. Decomposition terms are estimated for the
/// breakdown but do not contribute gradients.
pub fn beta_vae_step(
    model: &VaeModel,
    x: &Array2<f64>,
    noise: &Array2<f64>,
    weights: &LossWeights,
    dataset_size: usize,
) -> Result<StepOutput> {
    let fwd = run_forward(model, x, noise)?;
    let b = x.nrows() as f64;

    let d_xhat = (fwd.dec_trace.output() - x) / b;
    let dec_bp = model.decoder.backward(&fwd.dec_trace, &d_xhat)?;

    let beta_s = weights.beta_s;
    let d_mu_kl = fwd.mu.mapv(|m| beta_s / b * m);
    let d_log_var_kl = fwd.log_var.mapv(|lv| beta_s / b * 0.5 * (lv.exp() - 1.0));

    let encoder_grads = encoder_backward(
        model,
        &fwd,
        noise,
        &dec_bp.input_grad,
        d_mu_kl,
        d_log_var_kl,
    )?;

    let decomp = Decomposition::evaluate(&fwd.mu, &fwd.log_var, &fwd.latent, dataset_size)?;
    let kl_analytic = analytic_kl_raw(&fwd.mu, &fwd.log_var);
    let total = beta_vae_loss(fwd.rec, kl_analytic, beta_s);
    Ok(StepOutput {
        breakdown: LossBreakdown {
            rec: fwd.rec,
            mi_hat: decomp.mi,
            tc_hat: decomp.tc,
            dkl_hat: decomp.dkl,
            kl_analytic,
            total,
        },
        encoder_grads,
        decoder_grads: dec_bp.grads,
    })
}

/// Pure TC-VAE loss value for a fixed batch and noise draw; used by the
/// finite-difference harness.
pub fn tcvae_loss_value(
    model: &VaeModel,
    x: &Array2<f64>,
    noise: &Array2<f64>,
    weights: &LossWeights,
    dataset_size: usize,
) -> Result<f64> {
    let fwd = run_forward(model, x, noise)?;
    let decomp = Decomposition::evaluate(&fwd.mu, &fwd.log_var, &fwd.latent, dataset_size)?;
    Ok(tcvae_loss(fwd.rec, decomp.mi, decomp.tc, decomp.dkl, weights))
}
