//! Regression backends for factor-importance fitting: a CART-style random
//! forest with impurity (variance-reduction) importances, and a lasso for
//! deterministic linear baselines.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 8,
            min_samples_split: 2,
        }
    }
}

enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

pub struct RegressionTree {
    nodes: Vec<Node>,
    /// Raw summed impurity decrease per feature: `(SSE_node - SSE_l - SSE_r) / n_train`.
    importances: Vec<f64>,
}

struct TreeBuilder<'a> {
    x: &'a Array2<f64>,
    y: &'a Array1<f64>,
    params: ForestParams,
    n_train: f64,
    nodes: Vec<Node>,
    importances: Vec<f64>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    sse_gain: f64,
}

fn sse(sum: f64, sum_sq: f64, n: f64) -> f64 {
    (sum_sq - sum * sum / n).max(0.0)
}

impl<'a> TreeBuilder<'a> {
    fn best_split(&self, rows: &[usize], scratch: &mut Vec<(f64, f64)>) -> Option<BestSplit> {
        let n = rows.len() as f64;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for &r in rows {
            sum += self.y[r];
            sum_sq += self.y[r] * self.y[r];
        }
        let parent_sse = sse(sum, sum_sq, n);
        if parent_sse <= 1e-12 {
            return None;
        }

        let mut best: Option<BestSplit> = None;
        for feature in 0..self.x.ncols() {
            scratch.clear();
            scratch.extend(rows.iter().map(|&r| (self.x[[r, feature]], self.y[r])));
            scratch.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
            let (mut lsum, mut lsq) = (0.0, 0.0);
            for i in 1..scratch.len() {
                let (xv, yv) = scratch[i - 1];
                lsum += yv;
                lsq += yv * yv;
                if scratch[i].0 == xv {
                    continue;
                }
                let ln = i as f64;
                let rn = n - ln;
                let gain =
                    parent_sse - sse(lsum, lsq, ln) - sse(sum - lsum, sum_sq - lsq, rn);
                if gain > best.as_ref().map_or(1e-12, |b| b.sse_gain) {
                    best = Some(BestSplit {
                        feature,
                        threshold: 0.5 * (xv + scratch[i].0),
                        sse_gain: gain,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let n = rows.len();
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / n as f64;
        if depth >= self.params.max_depth || n < self.params.min_samples_split {
            self.nodes.push(Node::Leaf { value: mean });
            return self.nodes.len() - 1;
        }
        let mut scratch = Vec::with_capacity(n);
        let Some(split) = self.best_split(&rows, &mut scratch) else {
            self.nodes.push(Node::Leaf { value: mean });
            return self.nodes.len() - 1;
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| self.x[[r, split.feature]] <= split.threshold);
        self.importances[split.feature] += split.sse_gain / self.n_train;

        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { value: mean }); // placeholder
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        self.nodes[slot] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        slot
    }
}

impl RegressionTree {
    pub fn fit(x: &Array2<f64>, y: &Array1<f64>, rows: Vec<usize>, params: ForestParams) -> Self {
        let mut builder = TreeBuilder {
            x,
            y,
            params,
            n_train: rows.len() as f64,
            nodes: Vec::new(),
            importances: vec![0.0; x.ncols()],
        };
        builder.build(rows, 0);
        RegressionTree {
            nodes: builder.nodes,
            importances: builder.importances,
        }
    }

    pub fn predict_row(&self, row: ndarray::ArrayView1<f64>) -> f64 {
        // the root is always the first node pushed
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], idx: usize) -> usize {
            match &nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

pub struct RandomForest {
    trees: Vec<RegressionTree>,
    importances: Vec<f64>,
}

impl RandomForest {
    /// Fits `params.n_trees` bootstrap trees. RNG streams derive from
    /// `(seed, stream_base + tree index)` for schedule-independent
    /// determinism.
    pub fn fit(
        x: &Array2<f64>,
        y: &Array1<f64>,
        params: ForestParams,
        seed: u64,
        stream_base: u64,
    ) -> Result<Self> {
        let n = x.nrows();
        if n == 0 || n != y.len() {
            return Err(Error::shape("forest training data", n, y.len()));
        }
        if params.n_trees == 0 {
            return Err(Error::InvalidConfig("forest needs at least one tree".into()));
        }
        let mut trees = Vec::with_capacity(params.n_trees);
        let mut importances = vec![0.0; x.ncols()];
        for t in 0..params.n_trees {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_base.wrapping_add(t as u64).wrapping_add(1));
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let tree = RegressionTree::fit(x, y, rows, params);
            // normalize per tree so every tree votes with equal mass
            let total: f64 = tree.importances.iter().sum();
            if total > 0.0 {
                for (acc, &imp) in importances.iter_mut().zip(&tree.importances) {
                    *acc += imp / total;
                }
            }
            trees.push(tree);
        }
        for imp in importances.iter_mut() {
            *imp /= params.n_trees as f64;
        }
        Ok(RandomForest { trees, importances })
    }

    pub fn predict(&self, x: &Array2<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(x.nrows());
        for (r, row) in x.rows().into_iter().enumerate() {
            let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
            out[r] = sum / self.trees.len() as f64;
        }
        out
    }

    /// Mean per-tree-normalized impurity importances; nonnegative.
    pub fn importances(&self) -> &[f64] {
        &self.importances
    }
}

/// Lasso regression via coordinate descent on internally standardized
/// features; returns the coefficient vector in standardized-feature space.
pub fn lasso_coefficients(x: &Array2<f64>, y: &Array1<f64>, lambda: f64) -> Result<Array1<f64>> {
    let (n, p) = x.dim();
    if n == 0 || n != y.len() {
        return Err(Error::shape("lasso training data", n, y.len()));
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidConfig("lasso lambda must be finite and >= 0".into()));
    }
    let nf = n as f64;
    // standardize columns; constant columns get zero weight
    let mut xs = x.clone();
    let mut live = vec![true; p];
    for (j, mut col) in xs.columns_mut().into_iter().enumerate() {
        let mean = col.sum() / nf;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
        if var <= 1e-24 {
            live[j] = false;
            col.fill(0.0);
        } else {
            let std = var.sqrt();
            col.mapv_inplace(|v| (v - mean) / std);
        }
    }
    let y_mean = y.sum() / nf;

    let mut w = Array1::<f64>::zeros(p);
    let mut residual: Array1<f64> = y.mapv(|v| v - y_mean);
    for _ in 0..10_000 {
        let mut max_delta = 0.0f64;
        for j in 0..p {
            if !live[j] {
                continue;
            }
            let col = xs.column(j);
            // rho = (1/n) x_j . (residual + x_j * w_j); column variance is 1
            let rho = col.dot(&residual) / nf + w[j];
            let new_w = rho.signum() * (rho.abs() - lambda).max(0.0);
            let delta = new_w - w[j];
            if delta != 0.0 {
                residual = residual - &col.mapv(|v| v * delta);
                w[j] = new_w;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < 1e-10 {
            break;
        }
    }
    Ok(w)
}
