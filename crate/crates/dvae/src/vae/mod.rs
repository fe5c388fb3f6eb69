//! Beta-VAE / TC-VAE objectives, reparameterized sampling, minibatch
//! estimators of the MI/TC/dimension-wise-KL decomposition, and the
//! training loop.

mod decomposition;
mod step;
mod train;

pub use decomposition::estimate_decomposition;
pub use step::{beta_vae_step, tcvae_step, tcvae_loss_value, StepOutput};
pub use train::{train, LogEntry, TrainingLog};

use std::path::Path;

use ndarray::{s, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, DenseNetwork, Layer};

/// Log-variance is clamped to this symmetric range before any use.
pub const LOG_VAR_CLAMP: f64 = 12.0;

/// Per-sample diagonal Gaussian over the latent space.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    mu: Array2<f64>,
    log_var: Array2<f64>,
}

impl GaussianPosterior {
    /// Builds a posterior, clamping log-variances to `[-12, 12]`.
    pub fn new(mu: Array2<f64>, log_var: Array2<f64>) -> Result<Self> {
        if mu.raw_dim() != log_var.raw_dim() {
            return Err(Error::shape(
                "posterior shapes",
                format!("{:?}", mu.raw_dim()),
                format!("{:?}", log_var.raw_dim()),
            ));
        }
        if mu.iter().any(|v| !v.is_finite()) || log_var.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("posterior parameters"));
        }
        let log_var = log_var.mapv(|v| v.clamp(-LOG_VAR_CLAMP, LOG_VAR_CLAMP));
        Ok(GaussianPosterior { mu, log_var })
    }

    pub fn mu(&self) -> &Array2<f64> {
        &self.mu
    }

    pub fn log_var(&self) -> &Array2<f64> {
        &self.log_var
    }

    pub fn batch_size(&self) -> usize {
        self.mu.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.mu.ncols()
    }
}

/// `s = mu + exp(log_var / 2) * noise`, with externally drawn noise so
/// sampling stays deterministic and testable.
pub fn reparameterize(post: &GaussianPosterior, noise: &Array2<f64>) -> Result<Array2<f64>> {
    if noise.raw_dim() != post.mu.raw_dim() {
        return Err(Error::shape(
            "reparameterize noise",
            format!("{:?}", post.mu.raw_dim()),
            format!("{:?}", noise.raw_dim()),
        ));
    }
    Ok(&post.mu + &(post.log_var.mapv(|v| (0.5 * v).exp()) * noise))
}

/// Encoder/decoder pair with a fixed latent dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub encoder: DenseNetwork,
    pub decoder: DenseNetwork,
    latent_dim: usize,
}

impl VaeModel {
    pub fn new(encoder: DenseNetwork, decoder: DenseNetwork) -> Result<Self> {
        let latent_dim = decoder.input_dim();
        if encoder.output_dim() != 2 * latent_dim {
            return Err(Error::shape(
                "encoder output width (mu and log-var)",
                2 * latent_dim,
                encoder.output_dim(),
            ));
        }
        if decoder.output_dim() != encoder.input_dim() {
            return Err(Error::shape(
                "decoder output width",
                encoder.input_dim(),
                decoder.output_dim(),
            ));
        }
        Ok(VaeModel {
            encoder,
            decoder,
            latent_dim,
        })
    }

    /// Random model: encoder `obs -> hidden.. -> 2*latent`, decoder mirrored.
    pub fn random<R: Rng + ?Sized>(
        obs_dim: usize,
        latent_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let mut enc_dims = vec![obs_dim];
        enc_dims.extend_from_slice(hidden);
        enc_dims.push(2 * latent_dim);
        let mut dec_dims = vec![latent_dim];
        dec_dims.extend(hidden.iter().rev());
        dec_dims.push(obs_dim);
        let encoder = DenseNetwork::random(&enc_dims, Activation::Tanh, Activation::Identity, rng)?;
        let decoder = DenseNetwork::random(&dec_dims, Activation::Tanh, Activation::Identity, rng)?;
        VaeModel::new(encoder, decoder)
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Runs the encoder and splits its output into `(mu, log_var)`.
    pub fn encode(&self, x: &Array2<f64>) -> Result<GaussianPosterior> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("encoder input"));
        }
        let h = self.encoder.forward(x)?;
        let mu = h.slice(s![.., ..self.latent_dim]).to_owned();
        let log_var = h.slice(s![.., self.latent_dim..]).to_owned();
        GaussianPosterior::new(mu, log_var)
    }

    pub fn decode(&self, latent: &Array2<f64>) -> Result<Array2<f64>> {
        self.decoder.forward(latent)
    }

    /// Deterministic reconstruction through the posterior mean (noise = 0).
    pub fn reconstruct_mean(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let post = self.encode(x)?;
        self.decode(post.mu())
    }

    /// Saves encoder and decoder as one concatenated layer list in the
    /// binary checkpoint format.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let layers: Vec<&Layer> = self
            .encoder
            .layers()
            .iter()
            .chain(self.decoder.layers().iter())
            .collect();
        crate::nn::write_layers(std::io::BufWriter::new(file), &layers)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Loads a model saved by [`Self::save`]. The encoder/decoder boundary is
    /// the unique position where layer dimensions stop chaining (encoder ends
    /// at width `2*D`, decoder starts at `D`).
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let layers = crate::nn::read_layers(std::io::BufReader::new(file))?;
        let breaks: Vec<usize> = layers
            .windows(2)
            .enumerate()
            .filter(|(_, pair)| pair[0].output_dim() != pair[1].input_dim())
            .map(|(i, _)| i)
            .collect();
        let split = match breaks.as_slice() {
            [one] => one + 1,
            [] => {
                return Err(Error::Checkpoint(
                    "layers chain end to end; not an encoder/decoder checkpoint".into(),
                ))
            }
            many => {
                return Err(Error::Checkpoint(format!(
                    "found {} encoder/decoder boundaries, expected exactly 1",
                    many.len()
                )))
            }
        };
        let mut layers = layers;
        let decoder_layers = layers.split_off(split);
        let encoder = DenseNetwork::new(layers)?;
        let decoder = DenseNetwork::new(decoder_layers)?;
        VaeModel::new(encoder, decoder)
    }
}

/// Term weights of the decomposed objective plus the plain-ELBO weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub beta_s: f64,
}

impl LossWeights {
    /// Plain-ELBO weighting; `alpha = beta = gamma = beta_s` keeps the two
    /// objective forms equivalent.
    pub fn beta_vae(beta_s: f64) -> Self {
        LossWeights {
            alpha: beta_s,
            beta: beta_s,
            gamma: beta_s,
            beta_s,
        }
    }

    pub fn tcvae(alpha: f64, beta: f64, gamma: f64) -> Self {
        LossWeights {
            alpha,
            beta,
            gamma,
            beta_s: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("beta_s", self.beta_s),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "loss weight {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    BetaVae,
    Tcvae,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Objective::BetaVae => write!(f, "beta_vae"),
            Objective::Tcvae => write!(f, "tcvae"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub eval_every: u64,
    pub objective: Objective,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig(
                "batch_size must be >= 2 (minibatch estimators need more than one sample)".into(),
            ));
        }
        if self.eval_every < 1 {
            return Err(Error::InvalidConfig("eval_every must be >= 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be finite and >= 0".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 10_000,
            batch_size: 64,
            learning_rate: 1e-4,
            seed: 0,
            eval_every: 500,
            objective: Objective::BetaVae,
        }
    }
}

/// All loss terms of one evaluation; `total` is the weighted combination for
/// the active objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rec: f64,
    pub mi_hat: f64,
    pub tc_hat: f64,
    pub dkl_hat: f64,
    pub kl_analytic: f64,
    pub total: f64,
}

impl std::fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "rec={:.6} mi={:.6} tc={:.6} dkl={:.6} kl={:.6} total={:.6}",
            self.rec, self.mi_hat, self.tc_hat, self.dkl_hat, self.kl_analytic, self.total
        )
    }
}

/// Batch mean of `0.5 * ||x - x_hat||^2` summed over dimensions
/// (unit-variance Gaussian decoder likelihood).
pub fn reconstruction_loss(x: &Array2<f64>, x_hat: &Array2<f64>) -> Result<f64> {
    if x.raw_dim() != x_hat.raw_dim() {
        return Err(Error::shape(
            "reconstruction shapes",
            format!("{:?}", x.raw_dim()),
            format!("{:?}", x_hat.raw_dim()),
        ));
    }
    let b = x.nrows() as f64;
    let sq: f64 = (x - x_hat).iter().map(|d| d * d).sum();
    Ok(0.5 * sq / b)
}

/// Batch mean of the closed-form KL to the standard-normal prior:
/// `0.5 * sum_d (mu^2 + var - 1 - log var)`.
pub fn analytic_kl(post: &GaussianPosterior) -> f64 {
    analytic_kl_raw(&post.mu, &post.log_var)
}

pub(crate) fn analytic_kl_raw(mu: &Array2<f64>, log_var: &Array2<f64>) -> f64 {
    let b = mu.nrows() as f64;
    let mut total = 0.0;
    for (mu, lv) in mu.iter().zip(log_var.iter()) {
        total += 0.5 * (mu * mu + lv.exp() - 1.0 - lv);
    }
    total / b
}

/// `rec + beta_s * kl`.
pub fn beta_vae_loss(rec: f64, kl_analytic: f64, beta_s: f64) -> f64 {
    rec + beta_s * kl_analytic
}

/// `rec + alpha*mi + beta*tc + gamma*dkl`.
pub fn tcvae_loss(rec: f64, mi_hat: f64, tc_hat: f64, dkl_hat: f64, w: &LossWeights) -> f64 {
    rec + w.alpha * mi_hat + w.beta * tc_hat + w.gamma * dkl_hat
}
