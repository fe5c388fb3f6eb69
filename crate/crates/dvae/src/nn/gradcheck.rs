//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};

use super::{DenseNetwork, GradientSet};

/// Compares `analytic` against central finite differences of `loss` over
/// every parameter of `net`, returning the maximum relative error
/// `|analytic - central| / max(|analytic|, |central|, 1e-8)`.
///
/// `loss` must be a deterministic function of the network parameters (any
/// data, noise draws, or targets it closes over are held fixed).
pub fn finite_difference_check<L>(
    net: &DenseNetwork,
    analytic: &GradientSet,
    epsilon: f64,
    loss: L,
) -> Result<f64>
where
    L: Fn(&DenseNetwork) -> f64,
{
    if epsilon <= 0.0 {
        return Err(Error::InvalidConfig("finite-difference epsilon must be > 0".into()));
    }
    if analytic.layers.len() != net.layers().len() {
        return Err(Error::shape(
            "finite_difference_check gradients",
            net.layers().len(),
            analytic.layers.len(),
        ));
    }

    let mut work = net.clone();
    let mut max_err = 0.0f64;
    for l in 0..net.layers().len() {
        let n_weights = net.layers()[l].weights.len();
        for i in 0..n_weights {
            let a = analytic.layers[l].d_weights.as_slice().expect("contiguous")[i];
            let c = central(&mut work, epsilon, &loss, |n| {
                &mut n.layers_mut()[l].weights.as_slice_mut().expect("contiguous")[i]
            });
            max_err = max_err.max(relative_error(a, c));
        }
        let n_bias = net.layers()[l].bias.len();
        for i in 0..n_bias {
            let a = analytic.layers[l].d_bias[i];
            let c = central(&mut work, epsilon, &loss, |n| &mut n.layers_mut()[l].bias[i]);
            max_err = max_err.max(relative_error(a, c));
        }
    }
    Ok(max_err)
}

fn central<L, P>(work: &mut DenseNetwork, eps: f64, loss: &L, param: P) -> f64
where
    L: Fn(&DenseNetwork) -> f64,
    P: Fn(&mut DenseNetwork) -> &mut f64,
{
    let original = *param(work);
    *param(work) = original + eps;
    let plus = loss(work);
    *param(work) = original - eps;
    let minus = loss(work);
    *param(work) = original;
    (plus - minus) / (2.0 * eps)
}

fn relative_error(analytic: f64, central: f64) -> f64 {
    (analytic - central).abs() / analytic.abs().max(central.abs()).max(1e-8)
}
