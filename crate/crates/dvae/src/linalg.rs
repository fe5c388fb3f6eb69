//! Small dense linear-algebra helpers shared across modules: Cholesky
//! factorization, triangular solves, and stable log-sum-exp reductions.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// Fails when the matrix is not (numerically) positive definite.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::shape("cholesky", format!("{n}x{n}"), format!("{}x{}", n, a.ncols())));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::NotPositiveDefinite(format!(
                        "pivot {i} is {sum:.3e} during Cholesky factorization"
                    )));
                }
                l[[i, i]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solves `L y = b` for lower-triangular `L`.
pub fn solve_lower(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * y[k];
        }
        y[i] = sum / l[[i, i]];
    }
    y
}

/// Solves `L^T x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut sum = b[i];
        for k in i + 1..n {
            sum -= l[[k, i]] * x[k];
        }
        x[i] = sum / l[[i, i]];
    }
    x
}

/// Solves `(L L^T) x = b` given the Cholesky factor `L`.
pub fn solve_spd(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let y = solve_lower(l, b);
    solve_lower_transpose(l, y.view())
}

/// Numerically stable `log(sum(exp(x)))` over a slice.
///
/// Entries of `-inf` contribute zero mass; an all `-inf` input yields `-inf`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

pub const LN_2PI: f64 = 1.8378770664093453;

/// Log density of a scalar Gaussian parameterized by mean and log-variance.
#[inline]
pub fn gaussian_log_density(x: f64, mean: f64, log_var: f64) -> f64 {
    let diff = x - mean;
    -0.5 * (LN_2PI + log_var + diff * diff * (-log_var).exp())
}
