//! Monte Carlo mutual-information and entropy estimates under the aggregate
//! posterior `q(s) = 1/M sum_m q(s|x_m)`.
//!
//! Latents are drawn from each observation's posterior (`mc_samples` rounds),
//! scored against the plain `1/M` mixture with log-sum-exp, and averaged.
//! Per-dimension marginals fall out of the diagonal structure by dropping
//! coordinates.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{gaussian_log_density, logsumexp};
use crate::vae::{GaussianPosterior, VaeModel};

/// A Monte Carlo estimate with its standard error over the draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    pub value: f64,
    pub std_err: f64,
}

#[derive(Default)]
struct Accumulator {
    sum: f64,
    sum_sq: f64,
    count: u64,
}

impl Accumulator {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.sum_sq += v * v;
        self.count += 1;
    }

    fn estimate(&self) -> MiEstimate {
        let n = self.count as f64;
        let mean = self.sum / n;
        let var = (self.sum_sq / n - mean * mean).max(0.0);
        MiEstimate {
            value: mean,
            std_err: (var / n).sqrt(),
        }
    }
}

/// Everything WSEPIN needs from one set of draws: the joint MI, per-dimension
/// MI, leave-one-out MI, paired conditional MI, and marginal entropies.
pub struct MiProfile {
    pub full: MiEstimate,
    pub per_dim: Vec<MiEstimate>,
    pub per_complement: Vec<MiEstimate>,
    /// `I(x; s_j | s_{/= j})` accumulated as a paired difference.
    pub per_conditional: Vec<MiEstimate>,
    pub entropy: Vec<MiEstimate>,
}

fn check_posterior(post: &GaussianPosterior, mc_samples: usize) -> Result<()> {
    if post.batch_size() < 2 {
        return Err(Error::InvalidConfig(format!(
            "aggregate-posterior estimates need at least 2 observations, got {}",
            post.batch_size()
        )));
    }
    if mc_samples == 0 {
        return Err(Error::InvalidConfig("mc_samples must be >= 1".into()));
    }
    Ok(())
}

/// Full profile over all latent dimensions; deterministic under `seed`.
pub fn mi_profile(post: &GaussianPosterior, mc_samples: usize, seed: u64) -> Result<MiProfile> {
    check_posterior(post, mc_samples)?;
    let m = post.batch_size();
    let d = post.latent_dim();
    let mu = post.mu();
    let lv = post.log_var();
    let sigma = lv.mapv(|v| (0.5 * v).exp());
    let log_m = (m as f64).ln();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut full = Accumulator::default();
    let mut per_dim: Vec<Accumulator> = (0..d).map(|_| Accumulator::default()).collect();
    let mut per_comp: Vec<Accumulator> = (0..d).map(|_| Accumulator::default()).collect();
    let mut per_cond: Vec<Accumulator> = (0..d).map(|_| Accumulator::default()).collect();
    let mut entropy: Vec<Accumulator> = (0..d).map(|_| Accumulator::default()).collect();

    // per-draw scratch: log q(s | x_m) per component and dimension
    let mut dens = Array2::<f64>::zeros((m, d));
    let mut joint_logit = vec![0.0f64; m];
    let mut comp_logit = vec![0.0f64; m];
    let mut sample = vec![0.0f64; d];

    for _ in 0..mc_samples {
        for src in 0..m {
            for (j, s) in sample.iter_mut().enumerate() {
                let eps: f64 = rng.sample(StandardNormal);
                *s = mu[[src, j]] + sigma[[src, j]] * eps;
            }
            for comp in 0..m {
                let mut sum = 0.0;
                for j in 0..d {
                    let l = gaussian_log_density(sample[j], mu[[comp, j]], lv[[comp, j]]);
                    dens[[comp, j]] = l;
                    sum += l;
                }
                joint_logit[comp] = sum;
            }
            let log_q_joint = logsumexp(&joint_logit) - log_m;
            let own_full: f64 = (0..d).map(|j| dens[[src, j]]).sum();
            let full_term = own_full - log_q_joint;
            full.push(full_term);

            for j in 0..d {
                for comp in 0..m {
                    comp_logit[comp] = dens[[comp, j]];
                }
                let log_q_marg = logsumexp(&comp_logit) - log_m;
                per_dim[j].push(dens[[src, j]] - log_q_marg);
                entropy[j].push(-log_q_marg);

                for comp in 0..m {
                    comp_logit[comp] = joint_logit[comp] - dens[[comp, j]];
                }
                let log_q_comp = logsumexp(&comp_logit) - log_m;
                let comp_term = (own_full - dens[[src, j]]) - log_q_comp;
                per_comp[j].push(comp_term);
                per_cond[j].push(full_term - comp_term);
            }
        }
    }

    Ok(MiProfile {
        full: full.estimate(),
        per_dim: per_dim.iter().map(Accumulator::estimate).collect(),
        per_complement: per_comp.iter().map(Accumulator::estimate).collect(),
        per_conditional: per_cond.iter().map(Accumulator::estimate).collect(),
        entropy: entropy.iter().map(Accumulator::estimate).collect(),
    })
}

fn subselect(post: &GaussianPosterior, dims: &[usize]) -> Result<GaussianPosterior> {
    let d = post.latent_dim();
    if dims.is_empty() {
        return Err(Error::EmptyInput("dimension subset"));
    }
    let mut seen = vec![false; d];
    for &j in dims {
        if j >= d {
            return Err(Error::InvalidConfig(format!(
                "dimension {j} out of range for latent size {d}"
            )));
        }
        if seen[j] {
            return Err(Error::InvalidConfig(format!("duplicate dimension {j}")));
        }
        seen[j] = true;
    }
    GaussianPosterior::new(
        post.mu().select(Axis(1), dims),
        post.log_var().select(Axis(1), dims),
    )
}

/// `I(x; s_dims)` under the aggregate posterior of `sample` observations.
pub fn estimate_mi(
    model: &VaeModel,
    sample: &Array2<f64>,
    dims: &[usize],
    mc_samples: usize,
    seed: u64,
) -> Result<MiEstimate> {
    let post = model.encode(sample)?;
    mi_of_posterior(&subselect(&post, dims)?, mc_samples, seed)
}

/// `I(x; s)` for a posterior set directly (all of its dimensions).
pub fn mi_of_posterior(
    post: &GaussianPosterior,
    mc_samples: usize,
    seed: u64,
) -> Result<MiEstimate> {
    check_posterior(post, mc_samples)?;
    let m = post.batch_size();
    let d = post.latent_dim();
    let mu = post.mu();
    let lv = post.log_var();
    let sigma = lv.mapv(|v| (0.5 * v).exp());
    let log_m = (m as f64).ln();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Accumulator::default();
    let mut joint_logit = vec![0.0f64; m];
    let mut sample_vec = vec![0.0f64; d];
    for _ in 0..mc_samples {
        for src in 0..m {
            for (j, s) in sample_vec.iter_mut().enumerate() {
                let eps: f64 = rng.sample(StandardNormal);
                *s = mu[[src, j]] + sigma[[src, j]] * eps;
            }
            let mut own = 0.0;
            for comp in 0..m {
                let mut sum = 0.0;
                for j in 0..d {
                    sum += gaussian_log_density(sample_vec[j], mu[[comp, j]], lv[[comp, j]]);
                }
                joint_logit[comp] = sum;
                if comp == src {
                    own = sum;
                }
            }
            acc.push(own - (logsumexp(&joint_logit) - log_m));
        }
    }
    Ok(acc.estimate())
}

/// Differential entropy `H(s_j)` of the 1-D aggregate-posterior mixture.
pub fn estimate_entropy(
    model: &VaeModel,
    sample: &Array2<f64>,
    dim: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<MiEstimate> {
    let post = model.encode(sample)?;
    entropy_of_posterior(&post, dim, mc_samples, seed)
}

pub fn entropy_of_posterior(
    post: &GaussianPosterior,
    dim: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<MiEstimate> {
    let restricted = subselect(post, &[dim])?;
    check_posterior(&restricted, mc_samples)?;
    let m = restricted.batch_size();
    let mu: Array1<f64> = restricted.mu().column(0).to_owned();
    let lv: Array1<f64> = restricted.log_var().column(0).to_owned();
    let sigma = lv.mapv(|v| (0.5 * v).exp());
    let log_m = (m as f64).ln();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Accumulator::default();
    let mut logit = vec![0.0f64; m];
    for _ in 0..mc_samples {
        for src in 0..m {
            let eps: f64 = rng.sample(StandardNormal);
            let s = mu[src] + sigma[src] * eps;
            for comp in 0..m {
                logit[comp] = gaussian_log_density(s, mu[comp], lv[comp]);
            }
            acc.push(-(logsumexp(&logit) - log_m));
        }
    }
    Ok(acc.estimate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    const LN_2PI_E: f64 = 2.837877066409345; // ln(2*pi*e)

    fn posterior(mu: Vec<f64>, var: Vec<f64>, d: usize) -> GaussianPosterior {
        let m = mu.len() / d;
        GaussianPosterior::new(
            Array2::from_shape_vec((m, d), mu).unwrap(),
            Array2::from_shape_vec((m, d), var.iter().map(|v| v.ln()).collect()).unwrap(),
        )
        .unwrap()
    }

    /// Trapezoid-rule oracle for the MI of a 1-D equal-weight Gaussian
    /// mixture: I = sum_m (1/M) * int q_m(s) * (log q_m(s) - log q_bar(s)) ds.
    fn mi_quadrature_1d(mus: &[f64], var: f64) -> f64 {
        let m = mus.len() as f64;
        let lo = mus.iter().cloned().fold(f64::INFINITY, f64::min) - 8.0 * var.sqrt().max(1.0);
        let hi = mus.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 8.0 * var.sqrt().max(1.0);
        let steps = 400_000;
        let h = (hi - lo) / steps as f64;
        let comp = |s: f64, mu: f64| {
            (-(s - mu) * (s - mu) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
        };
        let mut integral = 0.0;
        for i in 0..=steps {
            let s = lo + i as f64 * h;
            let mix: f64 = mus.iter().map(|&mu| comp(s, mu)).sum::<f64>() / m;
            let mut f = 0.0;
            for &mu in mus {
                let q = comp(s, mu);
                if q > 0.0 && mix > 0.0 {
                    f += q / m * (q.ln() - mix.ln());
                }
            }
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            integral += w * f * h;
        }
        integral
    }

    #[test]
    fn identical_posteriors_carry_no_information() {
        let post = posterior(vec![0.3, 0.3, 0.3, 0.3], vec![0.5, 0.5, 0.5, 0.5], 1);
        let est = mi_of_posterior(&post, 16, 0).unwrap();
        assert!(est.value.abs() < 1e-12, "mi = {}", est.value);
    }

    #[test]
    fn two_separated_clusters_carry_one_bit() {
        let mus = vec![5.0, -5.0];
        let var = 0.01;
        let post = posterior(mus.clone(), vec![var, var], 1);
        let est = mi_of_posterior(&post, 4000, 1).unwrap();
        let oracle = mi_quadrature_1d(&mus, var);
        assert!(
            (oracle - std::f64::consts::LN_2).abs() < 1e-6,
            "quadrature oracle should give ln 2, got {oracle}"
        );
        assert!(
            (est.value - oracle).abs() < 0.05 * oracle,
            "estimate {} vs oracle {oracle}",
            est.value
        );
    }

    #[test]
    fn independent_informative_dims_add() {
        // four posteriors on the corners of (+-5, +-5): each dim carries ln 2,
        // the joint carries 2 ln 2
        let var = 0.01;
        let mu = vec![5.0, 5.0, 5.0, -5.0, -5.0, 5.0, -5.0, -5.0];
        let post = posterior(mu, vec![var; 8], 2);
        let joint = mi_of_posterior(&post, 2000, 2).unwrap();
        let dim0 = subselect(&post, &[0]).unwrap();
        let d0 = mi_of_posterior(&dim0, 2000, 3).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!((d0.value - ln2).abs() < 0.05 * ln2, "dim0 {} vs {}", d0.value, ln2);
        assert!(
            (joint.value - 2.0 * ln2).abs() < 0.05 * (2.0 * ln2),
            "joint {} vs {}",
            joint.value,
            2.0 * ln2
        );
    }

    #[test]
    fn standard_normal_aggregate_entropy_matches_closed_form() {
        // all posteriors exactly N(0,1): aggregate is standard normal
        let post = posterior(vec![0.0; 8], vec![1.0; 8], 1);
        let est = entropy_of_posterior(&post, 0, 2000, 4).unwrap();
        let expected = 0.5 * LN_2PI_E;
        assert!(
            (est.value - expected).abs() < 0.02 * expected,
            "entropy {} vs {expected}",
            est.value
        );
    }

    #[test]
    fn near_deterministic_dimension_has_large_negative_entropy() {
        let post = posterior(vec![0.0, 0.0], vec![1e-6, 1e-6], 1);
        let est = entropy_of_posterior(&post, 0, 500, 5).unwrap();
        assert!(est.value < -3.0, "entropy {}", est.value);
    }

    #[test]
    fn entropy_estimate_is_stable_across_seeds() {
        let post = posterior(vec![0.5, -0.5, 1.0, -1.0], vec![0.7; 4], 1);
        let a = entropy_of_posterior(&post, 0, 3000, 6).unwrap();
        let b = entropy_of_posterior(&post, 0, 3000, 7).unwrap();
        let tol = 3.0 * (a.std_err + b.std_err);
        assert!(
            (a.value - b.value).abs() < tol,
            "{} vs {} (tol {tol})",
            a.value,
            b.value
        );
    }

    #[test]
    fn conditional_mi_is_nonnegative_up_to_noise() {
        let mu = vec![1.0, -0.5, -1.0, 0.5, 0.3, 1.2, -0.7, -1.1];
        let post = posterior(mu, vec![0.2; 8], 2);
        let profile = mi_profile(&post, 500, 8).unwrap();
        for (j, cond) in profile.per_conditional.iter().enumerate() {
            assert!(
                cond.value >= -3.0 * cond.std_err,
                "conditional MI for dim {j}: {} (SE {})",
                cond.value,
                cond.std_err
            );
        }
    }

    #[test]
    fn profile_matches_single_subset_estimates() {
        let mu = vec![2.0, 0.0, -2.0, 1.0, 0.5, -1.5];
        let post = posterior(mu, vec![0.3; 6], 2);
        // same statistic computed through the profile and the subset path
        // agree within combined Monte Carlo error
        let profile = mi_profile(&post, 3000, 9).unwrap();
        let d1 = mi_of_posterior(&subselect(&post, &[1]).unwrap(), 3000, 10).unwrap();
        let tol = 3.0 * (profile.per_dim[1].std_err + d1.std_err) + 1e-9;
        assert!(
            (profile.per_dim[1].value - d1.value).abs() < tol,
            "{} vs {}",
            profile.per_dim[1].value,
            d1.value
        );
    }

    #[test]
    fn bad_dimension_subsets_are_rejected() {
        let post = posterior(vec![0.0, 0.0, 0.0, 0.0], vec![1.0; 4], 2);
        assert!(subselect(&post, &[]).is_err());
        assert!(subselect(&post, &[2]).is_err());
        assert!(subselect(&post, &[0, 0]).is_err());
    }
}
