//! Serialized evaluation artifact: metric values, KLD diagnostics, and the
//! exact configuration that produced them.

use serde::{Deserialize, Serialize};

use super::dci::DciScores;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WsepinSummary {
    pub value: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KldDiagnostics {
    /// Mean analytic KL to the prior over the evaluated sample.
    pub analytic_mean: f64,
    /// Per-latent-dimension KL means; near-zero entries are collapsed dims.
    pub per_dim: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DciReport {
    pub factor_names: Vec<String>,
    #[serde(flatten)]
    pub scores: DciScores,
}

/// Full evaluation report; optional sections are `null` when skipped, with
/// the reason recorded in `notices`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub toolkit_version: String,
    /// Echo of the resolved run configuration.
    pub config: serde_json::Value,
    pub eer: Option<f64>,
    pub wsepin: Option<WsepinSummary>,
    pub dci: Option<DciReport>,
    pub kld: Option<KldDiagnostics>,
    pub notices: Vec<String>,
}

impl MetricsReport {
    pub fn to_json_pretty(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}
