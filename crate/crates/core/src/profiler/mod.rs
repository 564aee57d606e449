//! Activation profiling over the validation set, sigma-band forging and
//! trigger-rate estimation.

mod bands;
mod estimate;
mod stats;

pub use bands::{forge_bands, Side, SigmaBand, DEFAULT_SIDES};
pub use estimate::{
    analytic_trigger_rate, estimate_trigger_rate, monte_carlo_hits, normal_cdf, wilson_half_width,
    ActivationModel, MonteCarlo, TriggerRateEstimate, Z95,
};
pub use stats::{
    collect_taps, export_histogram, profile_from_taps, profile_layer, profile_layer_with_bins,
    read_histogram_csv, write_histogram_csv, ElementStats, Histogram, HistogramRow, LayerProfile,
    LayerStats, DEFAULT_BINS,
};

use crate::error::Result;

/// Forge bands on a profiled layer, rejecting any that touch a validation
/// observation.
pub fn forge_from_profile(profile: &LayerProfile, k_lo: f64, k_hi: f64, sides: &[Side]) -> Result<Vec<SigmaBand>> {
    forge_bands(&profile.stats, &profile.observations, k_lo, k_hi, sides)
}
