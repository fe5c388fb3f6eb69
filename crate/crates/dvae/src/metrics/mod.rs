//! Disentanglement quantification: EER on reconstructions, WSEPIN, and the
//! supervised DCI triple.

mod dci;
mod eer;
mod forest;
mod mi;
mod report;
mod trials;
mod wsepin;

pub use dci::{
    compactness, dci_scores, fit_importance, modularity, DciScores, ImportanceBackend,
    ImportanceMatrix,
};
pub use eer::compute_eer;
pub use forest::{lasso_coefficients, ForestParams, RandomForest, RegressionTree};
pub use mi::{
    entropy_of_posterior, estimate_entropy, estimate_mi, mi_of_posterior, mi_profile, MiEstimate,
    MiProfile,
};
pub use report::{DciReport, KldDiagnostics, MetricsReport, WsepinSummary};
pub use trials::{build_trial_list, eer_on_reconstructions, Trial, TrialLabel, TrialList};
pub use wsepin::{wsepin, WsepinDim, WsepinReport, COLLAPSE_FLOOR, ENTROPY_FLOOR};

use ndarray::ArrayView1;

use crate::error::{Error, Result};

/// `a . b / (||a|| ||b||)`; rejects zero-norm inputs.
pub fn cosine_similarity(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("cosine similarity", a.len(), b.len()));
    }
    let norm_a = a.dot(&a).sqrt();
    let norm_b = b.dot(&b).sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(Error::ZeroVector("cosine_similarity"));
    }
    Ok(a.dot(&b) / (norm_a * norm_b))
}
