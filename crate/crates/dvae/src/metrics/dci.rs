//! DCI disentanglement scores from per-factor regressor importances:
//! compactness (few dimensions per factor), modularity (few factors per
//! dimension), and explicitness (held-out regression error).

use std::io::Write;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::forest::{lasso_coefficients, ForestParams, RandomForest};

/// Nonnegative `K x D` matrix of latent-dimension importances per factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMatrix {
    pub scores: Array2<f64>,
    pub factor_names: Vec<String>,
}

impl ImportanceMatrix {
    pub fn new(scores: Array2<f64>, factor_names: Vec<String>) -> Result<Self> {
        if scores.nrows() != factor_names.len() {
            return Err(Error::shape(
                "importance matrix rows",
                factor_names.len(),
                scores.nrows(),
            ));
        }
        if scores.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidConfig(
                "importance scores must be finite and nonnegative".into(),
            ));
        }
        Ok(ImportanceMatrix { scores, factor_names })
    }

    pub fn n_factors(&self) -> usize {
        self.scores.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.scores.ncols()
    }

    /// CSV export, factors as rows and latent dimensions as columns.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = String::from("factor");
        for j in 0..self.latent_dim() {
            header.push_str(&format!(",dim_{j}"));
        }
        writeln!(w, "{header}")?;
        for (k, name) in self.factor_names.iter().enumerate() {
            let mut line = name.clone();
            for v in self.scores.row(k).iter() {
                line.push_str(&format!(",{v}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// How the per-factor regressors quantify importance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceBackend {
    /// Random forest with impurity importances.
    Forest { n_trees: usize, max_depth: usize },
    /// Lasso regression; importance is `|weight|`.
    Lasso { lambda: f64 },
}

impl Default for ImportanceBackend {
    fn default() -> Self {
        ImportanceBackend::Forest {
            n_trees: 100,
            max_depth: 8,
        }
    }
}

/// Fits one regressor per factor on an 80/20 split of `(latents, factors)`.
/// Factors are standardized to zero mean and unit variance first, so the
/// held-out mean-squared errors (explicitness, lower is better) are
/// comparable across factors.
pub fn fit_importance(
    latents: &Array2<f64>,
    factors: &Array2<f64>,
    factor_names: &[String],
    backend: &ImportanceBackend,
    split_seed: u64,
) -> Result<(ImportanceMatrix, Vec<f64>)> {
    let n = latents.nrows();
    let k = factors.ncols();
    if factors.nrows() != n {
        return Err(Error::shape("factor rows", n, factors.nrows()));
    }
    if factor_names.len() != k {
        return Err(Error::shape("factor names", k, factor_names.len()));
    }
    if n < 100 {
        return Err(Error::InvalidConfig(format!(
            "importance fitting needs at least 100 rows, got {n}"
        )));
    }

    // standardize factor columns
    let nf = n as f64;
    let mut std_factors = factors.clone();
    for (j, mut col) in std_factors.columns_mut().into_iter().enumerate() {
        let mean = col.sum() / nf;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
        if var <= 1e-24 {
            return Err(Error::ZeroVarianceColumn(factor_names[j].clone()));
        }
        let std = var.sqrt();
        col.mapv_inplace(|v| (v - mean) / std);
    }

    // deterministic 80/20 split
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let n_train = (0.8 * nf).round() as usize;
    let (train_rows, test_rows) = order.split_at(n_train);
    let x_train = latents.select(Axis(0), train_rows);
    let x_test = latents.select(Axis(0), test_rows);

    let d = latents.ncols();
    let mut scores = Array2::<f64>::zeros((k, d));
    let mut explicitness = Vec::with_capacity(k);
    for factor in 0..k {
        let y_train: Array1<f64> = train_rows.iter().map(|&r| std_factors[[r, factor]]).collect();
        let y_test: Array1<f64> = test_rows.iter().map(|&r| std_factors[[r, factor]]).collect();
        let (importance, prediction): (Vec<f64>, Array1<f64>) = match backend {
            ImportanceBackend::Forest { n_trees, max_depth } => {
                let params = ForestParams {
                    n_trees: *n_trees,
                    max_depth: *max_depth,
                    ..ForestParams::default()
                };
                let forest = RandomForest::fit(
                    &x_train,
                    &y_train,
                    params,
                    split_seed,
                    (factor as u64) * (*n_trees as u64),
                )?;
                (forest.importances().to_vec(), forest.predict(&x_test))
            }
            ImportanceBackend::Lasso { lambda } => {
                let w = lasso_coefficients(&x_train, &y_train, *lambda)?;
                // refit scaling on train stats for prediction
                let pred = lasso_predict(&x_train, &y_train, &w, &x_test);
                (w.iter().map(|v| v.abs()).collect(), pred)
            }
        };
        for (j, imp) in importance.iter().enumerate() {
            scores[[factor, j]] = imp.max(0.0);
        }
        let mse = prediction
            .iter()
            .zip(y_test.iter())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / y_test.len() as f64;
        explicitness.push(mse);
    }

    Ok((
        ImportanceMatrix::new(scores, factor_names.to_vec())?,
        explicitness,
    ))
}

/// Prediction for the lasso backend: coefficients live in standardized
/// feature space, so test features are standardized with train statistics.
fn lasso_predict(
    x_train: &Array2<f64>,
    y_train: &Array1<f64>,
    w: &Array1<f64>,
    x_test: &Array2<f64>,
) -> Array1<f64> {
    let nf = x_train.nrows() as f64;
    let y_mean = y_train.sum() / nf;
    let mut pred = Array1::from_elem(x_test.nrows(), y_mean);
    for j in 0..x_train.ncols() {
        if w[j] == 0.0 {
            continue;
        }
        let col = x_train.column(j);
        let mean = col.sum() / nf;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
        if var <= 1e-24 {
            continue;
        }
        let std = var.sqrt();
        for (r, x_row) in x_test.rows().into_iter().enumerate() {
            pred[r] += w[j] * (x_row[j] - mean) / std;
        }
    }
    pred
}

fn entropy_score(weights: &[f64], base: usize) -> (f64, bool) {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return (0.0, true);
    }
    if base < 2 {
        // a single bucket is maximally concentrated by definition
        return (1.0, false);
    }
    let ln_base = (base as f64).ln();
    let mut acc = 1.0;
    for &w in weights {
        let p = w / total;
        if p > 0.0 {
            acc += p * p.ln() / ln_base;
        }
    }
    (acc.clamp(0.0, 1.0), false)
}

/// Per-factor compactness `1 + sum_d p_kd log_D p_kd` with
/// `p_kd = r_kd / sum_d r_kd` and `0 log 0 = 0`. All-zero rows score 0 and
/// are flagged.
pub fn compactness(r: &ImportanceMatrix) -> (Vec<f64>, Vec<bool>) {
    let d = r.latent_dim();
    let mut values = Vec::with_capacity(r.n_factors());
    let mut flags = Vec::with_capacity(r.n_factors());
    for row in r.scores.rows() {
        let (v, f) = entropy_score(row.as_slice().expect("contiguous"), d);
        values.push(v);
        flags.push(f);
    }
    (values, flags)
}

/// Per-dimension modularity `1 + sum_k p~_kd log_K p~_kd` with
/// `p~_kd = r_kd / sum_k r_kd`. All-zero columns score 0 and are flagged.
pub fn modularity(r: &ImportanceMatrix) -> (Vec<f64>, Vec<bool>) {
    let k = r.n_factors();
    let mut values = Vec::with_capacity(r.latent_dim());
    let mut flags = Vec::with_capacity(r.latent_dim());
    for col in r.scores.columns() {
        let weights: Vec<f64> = col.iter().cloned().collect();
        let (v, f) = entropy_score(&weights, k);
        values.push(v);
        flags.push(f);
    }
    (values, flags)
}

/// The DCI triple plus importance-weighted aggregates: compactness weighted
/// by factor importance mass, modularity by dimension importance mass,
/// explicitness averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DciScores {
    pub compactness: Vec<f64>,
    pub modularity: Vec<f64>,
    pub explicitness: Vec<f64>,
    pub compactness_aggregate: f64,
    pub modularity_aggregate: f64,
    pub explicitness_aggregate: f64,
    pub degenerate_factors: Vec<bool>,
    pub degenerate_dims: Vec<bool>,
}

pub fn dci_scores(r: &ImportanceMatrix, explicitness: &[f64]) -> DciScores {
    let (comp, comp_flags) = compactness(r);
    let (modu, mod_flags) = modularity(r);
    let total: f64 = r.scores.iter().sum();

    let comp_agg = if total > 0.0 {
        r.scores
            .rows()
            .into_iter()
            .zip(&comp)
            .map(|(row, c)| row.sum() / total * c)
            .sum()
    } else {
        0.0
    };
    let mod_agg = if total > 0.0 {
        r.scores
            .columns()
            .into_iter()
            .zip(&modu)
            .map(|(col, m)| col.sum() / total * m)
            .sum()
    } else {
        0.0
    };
    let expl_agg = if explicitness.is_empty() {
        0.0
    } else {
        explicitness.iter().sum::<f64>() / explicitness.len() as f64
    };

    DciScores {
        compactness: comp,
        modularity: modu,
        explicitness: explicitness.to_vec(),
        compactness_aggregate: comp_agg,
        modularity_aggregate: mod_agg,
        explicitness_aggregate: expl_agg,
        degenerate_factors: comp_flags,
        degenerate_dims: mod_flags,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(scores: Array2<f64>) -> ImportanceMatrix {
        let names = (0..scores.nrows()).map(|k| format!("f_{k}")).collect();
        ImportanceMatrix::new(scores, names).unwrap()
    }

    #[test]
    fn one_hot_row_is_maximally_compact() {
        let r = matrix(array![[0.0, 1.0, 0.0, 0.0]]);
        let (comp, flags) = compactness(&r);
        assert_eq!(comp, vec![1.0]);
        assert_eq!(flags, vec![false]);
    }

    #[test]
    fn uniform_row_has_zero_compactness() {
        let r = matrix(array![[0.25, 0.25, 0.25, 0.25]]);
        let (comp, _) = compactness(&r);
        assert!(comp[0].abs() < 1e-15, "comp = {}", comp[0]);
    }

    #[test]
    fn half_concentrated_row_scores_one_half() {
        // D = 4, row [2,2,0,0]: entropy is 1 bit of 2 -> compactness 0.5
        let r = matrix(array![[2.0, 2.0, 0.0, 0.0]]);
        let (comp, _) = compactness(&r);
        assert!((comp[0] - 0.5).abs() < 1e-15, "comp = {}", comp[0]);
    }

    #[test]
    fn all_zero_row_is_flagged() {
        let r = matrix(array![[0.0, 0.0], [1.0, 0.0]]);
        let (comp, flags) = compactness(&r);
        assert_eq!(comp[0], 0.0);
        assert!(flags[0]);
        assert!(!flags[1]);
    }

    #[test]
    fn modularity_examples() {
        // single-factor column -> 1; uniform column -> 0
        let r = matrix(array![[1.0, 0.5], [0.0, 0.5]]);
        let (modu, flags) = modularity(&r);
        assert_eq!(modu[0], 1.0);
        assert!(modu[1].abs() < 1e-15);
        assert_eq!(flags, vec![false, false]);
    }

    #[test]
    fn permutation_matrix_is_the_one_to_one_fixed_point() {
        let k = 10;
        let mut scores = Array2::zeros((k, k));
        // an arbitrary permutation with non-unit magnitudes
        for i in 0..k {
            scores[[i, (i * 3 + 1) % k]] = 0.3 + i as f64;
        }
        let r = matrix(scores);
        let (comp, _) = compactness(&r);
        let (modu, _) = modularity(&r);
        assert!(comp.iter().all(|&c| c == 1.0));
        assert!(modu.iter().all(|&m| m == 1.0));
        let dci = dci_scores(&r, &vec![0.0; k]);
        assert_eq!(dci.compactness_aggregate, 1.0);
        assert_eq!(dci.modularity_aggregate, 1.0);
    }

    #[test]
    fn uniform_matrix_scores_zero() {
        let r = matrix(Array2::from_elem((4, 6), 0.5));
        let dci = dci_scores(&r, &[0.0; 4]);
        assert!(dci.compactness_aggregate.abs() < 1e-12);
        assert!(dci.modularity_aggregate.abs() < 1e-12);
    }

    #[test]
    fn scores_are_invariant_to_row_and_column_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let scores = Array2::from_shape_fn((3, 5), |_| rng.gen_range(0.0..2.0));
            let r = matrix(scores.clone());
            let (comp, _) = compactness(&r);
            let mut scaled = scores.clone();
            for (i, mut row) in scaled.rows_mut().into_iter().enumerate() {
                let factor = 0.5 + i as f64 * 1.7;
                row.mapv_inplace(|v| v * factor);
            }
            let (comp_scaled, _) = compactness(&matrix(scaled));
            for (a, b) in comp.iter().zip(&comp_scaled) {
                assert!((a - b).abs() < 1e-12);
            }

            let (modu, _) = modularity(&r);
            let mut scaled = scores.clone();
            for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
                let factor = 0.25 + j as f64;
                col.mapv_inplace(|v| v * factor);
            }
            let (modu_scaled, _) = modularity(&matrix(scaled));
            for (a, b) in modu.iter().zip(&modu_scaled) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scores_stay_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let scores = Array2::from_shape_fn((4, 7), |_| {
                if rng.gen_bool(0.3) {
                    0.0
                } else {
                    rng.gen_range(0.0..5.0)
                }
            });
            let r = matrix(scores);
            let (comp, _) = compactness(&r);
            let (modu, _) = modularity(&r);
            for v in comp.iter().chain(modu.iter()) {
                assert!((0.0..=1.0).contains(v), "score {v} out of bounds");
            }
        }
    }

    #[test]
    fn identity_latents_give_diagonal_importance_and_tiny_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 400;
        let k = 4;
        let factors = Array2::from_shape_fn((n, k), |_| rng.gen_range(-2.0..2.0));
        let latents = factors.clone();
        let names: Vec<String> = (0..k).map(|i| format!("f_{i}")).collect();
        let (r, expl) = fit_importance(
            &latents,
            &factors,
            &names,
            &ImportanceBackend::default(),
            3,
        )
        .unwrap();
        for row in 0..k {
            let total: f64 = r.scores.row(row).sum();
            let diag = r.scores[[row, row]];
            assert!(diag / total > 0.9, "row {row}: diagonal mass {}", diag / total);
        }
        for (k, e) in expl.iter().enumerate() {
            assert!(*e < 0.05, "explicitness[{k}] = {e}");
        }
    }

    #[test]
    fn independent_factor_has_chance_level_explicitness() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 400;
        let latents = Array2::from_shape_fn((n, 3), |_| rng.gen_range(-1.0..1.0));
        let factors = Array2::from_shape_fn((n, 1), |_| rng.gen_range(-1.0..1.0f64));
        let (_, expl) = fit_importance(
            &latents,
            &factors,
            &["noise".to_string()],
            &ImportanceBackend::default(),
            4,
        )
        .unwrap();
        assert!(
            (expl[0] - 1.0).abs() < 0.35,
            "predicting the mean of a unit-variance factor gives MSE near 1, got {}",
            expl[0]
        );
    }

    #[test]
    fn lasso_backend_recovers_identity_too() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let n = 300;
        let k = 3;
        let factors = Array2::from_shape_fn((n, k), |_| rng.gen_range(-1.0..1.0));
        let latents = factors.clone();
        let names: Vec<String> = (0..k).map(|i| format!("f_{i}")).collect();
        let (r, expl) = fit_importance(
            &latents,
            &factors,
            &names,
            &ImportanceBackend::Lasso { lambda: 0.01 },
            5,
        )
        .unwrap();
        for row in 0..k {
            let total: f64 = r.scores.row(row).sum();
            assert!(r.scores[[row, row]] / total > 0.9);
        }
        assert!(expl.iter().all(|&e| e < 0.05));
    }

    #[test]
    fn constant_factor_is_rejected_by_name() {
        let latents = Array2::from_shape_fn((120, 2), |(i, j)| (i + j) as f64);
        let factors = Array2::from_elem((120, 1), 3.0);
        match fit_importance(
            &latents,
            &factors,
            &["frozen".to_string()],
            &ImportanceBackend::default(),
            0,
        ) {
            Err(Error::ZeroVarianceColumn(name)) => assert_eq!(name, "frozen"),
            other => panic!("expected zero-variance rejection, got {other:?}"),
        }
    }

    #[test]
    fn importance_csv_layout() {
        let r = matrix(array![[1.0, 0.0], [0.25, 0.75]]);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "factor,dim_0,dim_1");
        assert_eq!(lines[1], "f_0,1,0");
        assert_eq!(lines[2], "f_1,0.25,0.75");
    }
}
