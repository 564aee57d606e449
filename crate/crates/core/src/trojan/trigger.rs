use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Result;
use crate::model::ModelSpec;
use crate::profiler::{collect_taps, wilson_half_width, SigmaBand};
use crate::tensor::Tensor;

/// First element (lowest index) lying inside any band, bounds inclusive.
pub fn check_trigger(layer_output: &Tensor, bands: &[SigmaBand]) -> Option<(usize, f64)> {
    first_hit(layer_output.values(), bands)
}

pub fn first_hit(values: impl Iterator<Item = f64>, bands: &[SigmaBand]) -> Option<(usize, f64)> {
    if bands.is_empty() {
        return None;
    }
    values
        .enumerate()
        .find(|&(_, v)| bands.iter().any(|b| b.contains(v)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RateMeasurement {
    pub hits: u64,
    pub trials: u64,
    pub rate: f64,
    pub half_width: f64,
}

impl RateMeasurement {
    pub fn from_counts(hits: u64, trials: u64) -> Self {
        RateMeasurement {
            hits,
            trials,
            rate: if trials == 0 { 0.0 } else { hits as f64 / trials as f64 },
            half_width: wilson_half_width(hits, trials),
        }
    }
}

/// Fraction of images whose watched tap would fire the trigger on a clean
/// pipeline.
pub fn measure_trigger_rate(model: &ModelSpec, images: &Dataset, layer: &str, bands: &[SigmaBand]) -> Result<RateMeasurement> {
    let taps = collect_taps(model, images, layer)?;
    let hits = taps
        .par_iter()
        .filter(|t| first_hit(t.iter().copied(), bands).is_some())
        .count() as u64;
    Ok(RateMeasurement::from_counts(hits, taps.len() as u64))
}
