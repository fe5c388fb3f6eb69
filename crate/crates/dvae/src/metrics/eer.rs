//! Equal error rate from verification scores.

use crate::error::{Error, Result};

/// EER via a sorted threshold sweep with linear interpolation at the
/// FAR = FRR crossing. Scores greater than or equal to the threshold count
/// as accepts, so at each candidate threshold `t`:
/// `FRR(t) = #{target < t} / #targets`, `FAR(t) = #{nontarget >= t} / #nontargets`.
pub fn compute_eer(target_scores: &[f64], nontarget_scores: &[f64]) -> Result<f64> {
    if target_scores.is_empty() {
        return Err(Error::EmptyInput("target scores"));
    }
    if nontarget_scores.is_empty() {
        return Err(Error::EmptyInput("nontarget scores"));
    }
    if target_scores
        .iter()
        .chain(nontarget_scores.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFiniteInput("verification scores"));
    }

    let mut targets = target_scores.to_vec();
    let mut nontargets = nontarget_scores.to_vec();
    targets.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    nontargets.sort_by(|a, b| a.partial_cmp(b).expect("finite"));

    // candidate thresholds: all distinct scores, ascending
    let mut thresholds: Vec<f64> = targets.iter().chain(nontargets.iter()).cloned().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    thresholds.dedup();

    let p = targets.len() as f64;
    let q = nontargets.len() as f64;
    let mut ti = 0usize; // targets strictly below current threshold
    let mut ni = 0usize; // nontargets strictly below current threshold

    // walk the operating points; append the everything-rejected endpoint
    let mut prev_far = 1.0;
    let mut prev_frr = 0.0;
    for k in 0..=thresholds.len() {
        let (far, frr) = if k < thresholds.len() {
            let t = thresholds[k];
            while ti < targets.len() && targets[ti] < t {
                ti += 1;
            }
            while ni < nontargets.len() && nontargets[ni] < t {
                ni += 1;
            }
            (
                (nontargets.len() - ni) as f64 / q,
                ti as f64 / p,
            )
        } else {
            (0.0, 1.0)
        };
        let diff = far - frr;
        if diff <= 0.0 {
            if diff == 0.0 {
                return Ok(far);
            }
            // crossing happened between the previous point and this one
            let prev_diff = prev_far - prev_frr;
            let t = prev_diff / (prev_diff - diff);
            return Ok(prev_far + t * (far - prev_far));
        }
        prev_far = far;
        prev_frr = frr;
    }
    unreachable!("the everything-rejected endpoint has FAR - FRR = -1")
}
