//! Minibatch training loop, deterministic for a fixed seed.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamConfig, AdamState};

use super::{beta_vae_step, tcvae_step, LossBreakdown, LossWeights, Objective, TrainConfig, VaeModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub iteration: u64,
    pub breakdown: LossBreakdown,
}

/// Loss trajectory recorded every `eval_every` iterations (plus the final
/// one), serialized as line-delimited records.
#[derive(Debug, Clone, Default)]
pub struct TrainingLog {
    pub entries: Vec<LogEntry>,
}

impl TrainingLog {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,rec,mi_hat,tc_hat,dkl_hat,kl_analytic,total")?;
        for e in &self.entries {
            let b = e.breakdown;
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                e.iteration, b.rec, b.mi_hat, b.tc_hat, b.dkl_hat, b.kl_analytic, b.total
            )?;
        }
        Ok(())
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn final_breakdown(&self) -> Option<LossBreakdown> {
        self.entries.last().map(|e| e.breakdown)
    }
}

/// Trains `model` on `observations` with minibatch Adam. Fully deterministic
/// given `config.seed`; aborts with the offending iteration and breakdown on
/// a non-finite loss.
pub fn train(
    observations: &Array2<f64>,
    model: VaeModel,
    config: &TrainConfig,
    weights: &LossWeights,
) -> Result<(VaeModel, TrainingLog)> {
    config.validate()?;
    weights.validate()?;
    let n = observations.nrows();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "training needs at least 2 observations, got {n}"
        )));
    }
    if observations.ncols() != model.obs_dim() {
        return Err(Error::shape(
            "training observations width",
            model.obs_dim(),
            observations.ncols(),
        ));
    }
    if observations.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("training observations"));
    }

    let mut model = model;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let adam = AdamConfig::with_learning_rate(config.learning_rate);
    let mut enc_state = AdamState::new(&model.encoder, adam);
    let mut dec_state = AdamState::new(&model.decoder, adam);
    let d = model.latent_dim();
    let b = config.batch_size;

    let mut log = TrainingLog::default();
    let mut indices = vec![0usize; b];
    for it in 0..config.iterations {
        for slot in indices.iter_mut() {
            *slot = rng.gen_range(0..n);
        }
        let batch = observations.select(Axis(0), &indices);
        let noise = Array2::from_shape_fn((b, d), |_| rng.sample(StandardNormal));

        let step = match config.objective {
            Objective::Tcvae => tcvae_step(&model, &batch, &noise, weights, n)?,
            Objective::BetaVae => beta_vae_step(&model, &batch, &noise, weights, n)?,
        };
        if !step.breakdown.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: it,
                breakdown: step.breakdown.to_string(),
            });
        }

        if it % config.eval_every == 0 || it + 1 == config.iterations {
            log.entries.push(LogEntry {
                iteration: it,
                breakdown: step.breakdown,
            });
        }

        adam_step(&mut model.encoder, &step.encoder_grads, &mut enc_state)?;
        adam_step(&mut model.decoder, &step.decoder_grads, &mut dec_state)?;
    }

    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::analytic_kl;
    use rand::SeedableRng;

    fn toy_observations(n: usize, dx: usize, seed: u64) -> Array2<f64> {
        // two well-separated clusters so the latent has something to encode
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, dx), |(i, _)| {
            let center = if i % 2 == 0 { 2.0 } else { -2.0 };
            center + 0.1 * rng.gen_range(-1.0..1.0f64)
        })
    }

    fn toy_config(objective: Objective, iterations: u64, lr: f64) -> TrainConfig {
        TrainConfig {
            iterations,
            batch_size: 8,
            learning_rate: lr,
            seed: 77,
            eval_every: 50,
            objective,
        }
    }

    #[test]
    fn same_seed_gives_bit_identical_models() {
        let obs = toy_observations(32, 4, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let init = VaeModel::random(4, 2, &[6], &mut rng).unwrap();
        let config = toy_config(Objective::Tcvae, 40, 1e-3);
        let weights = LossWeights::tcvae(0.0, 0.5, 0.5);
        let (m1, log1) = train(&obs, init.clone(), &config, &weights).unwrap();
        let (m2, log2) = train(&obs, init, &config, &weights).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(log1.entries, log2.entries);
    }

    #[test]
    fn autoencoder_reconstruction_improves() {
        let obs = toy_observations(64, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let init = VaeModel::random(4, 2, &[8], &mut rng).unwrap();
        let config = toy_config(Objective::BetaVae, 1500, 1e-2);
        let weights = LossWeights::beta_vae(0.0);
        let (_, log) = train(&obs, init, &config, &weights).unwrap();
        let first = log.entries.first().unwrap().breakdown.rec;
        let last = log.final_breakdown().unwrap().rec;
        assert!(
            last < 0.1 * first,
            "reconstruction should fall below 10% of initial: {first} -> {last}"
        );
    }

    #[test]
    fn large_beta_collapses_posterior() {
        // keep the reconstruction payoff small so beta_s = 10 makes the
        // fully collapsed posterior the optimum
        let obs = toy_observations(64, 4, 3).mapv(|v| 0.25 * v);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let init = VaeModel::random(4, 2, &[8], &mut rng).unwrap();
        let config = toy_config(Objective::BetaVae, 3000, 1e-2);
        let weights = LossWeights::beta_vae(10.0);
        let (model, _) = train(&obs, init, &config, &weights).unwrap();
        let post = model.encode(&obs).unwrap();
        let kl = analytic_kl(&post);
        assert!(kl < 0.1, "expected posterior collapse, final KL = {kl}");
    }

    #[test]
    fn non_finite_loss_aborts_with_iteration() {
        let obs = toy_observations(16, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut init = VaeModel::random(4, 2, &[6], &mut rng).unwrap();
        init.encoder.layers_mut()[0].weights[[0, 0]] = f64::NAN;
        let config = toy_config(Objective::BetaVae, 10, 1e-3);
        let err = train(&obs, init, &config, &LossWeights::beta_vae(1.0)).unwrap_err();
        match err {
            Error::NonFiniteLoss { iteration, .. } => assert_eq!(iteration, 0),
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }

    #[test]
    fn training_log_csv_has_header_and_rows() {
        let obs = toy_observations(16, 4, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let init = VaeModel::random(4, 2, &[6], &mut rng).unwrap();
        let config = toy_config(Objective::Tcvae, 20, 1e-3);
        let (_, log) = train(&obs, init, &config, &LossWeights::tcvae(0.0, 0.1, 0.1)).unwrap();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iteration,rec,mi_hat,tc_hat,dkl_hat,kl_analytic,total"
        );
        assert_eq!(lines.count(), log.entries.len());
    }
}
