use serde::{Deserialize, Serialize};

use crate::profiler::SigmaBand;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DefenseKind {
    AlteredValidation,
    Distributed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Verdict {
    Effective,
    Ineffective,
    Inconclusive,
}

/// Outcome of simulating the adversary against one countermeasure.
///
/// Rate and collision fields are `None` for the distributed case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DefenseReport {
    pub kind: DefenseKind,
    pub adversary_trigger_rate_designed: Option<f64>,
    pub adversary_trigger_rate_actual: Option<f64>,
    pub band_collision_count: Option<u64>,
    /// Altered-set observations inside the adversary's own bands.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub adversary_self_collision_count: Option<u64>,
    pub exposure_findings: Vec<String>,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub designed_half_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actual_half_width: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub adversary_bands: Vec<SigmaBand>,
    /// Why the verdict is inconclusive, when it is.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl DefenseReport {
    pub(crate) fn empty(kind: DefenseKind, verdict: Verdict) -> Self {
        DefenseReport {
            kind,
            adversary_trigger_rate_designed: None,
            adversary_trigger_rate_actual: None,
            band_collision_count: None,
            adversary_self_collision_count: None,
            exposure_findings: Vec::new(),
            verdict,
            designed_half_width: None,
            actual_half_width: None,
            adversary_bands: Vec::new(),
            detail: None,
        }
    }
}
