use std::fmt;

use serde::{Deserialize, Serialize};

use super::stats::{count_in_sorted, LayerStats};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Upper => "upper",
            Side::Lower => "lower",
        })
    }
}

/// Trigger boundary condition on one layer: `[lo, hi]`, inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SigmaBand {
    pub layer_name: String,
    pub lo: f64,
    pub hi: f64,
    pub side: Side,
    pub k_lo: f64,
    pub k_hi: f64,
}

impl SigmaBand {
    /// Upper: `[mean + k_lo*sd, mean + k_hi*sd]`.
    /// Lower: `[mean - k_hi*sd, mean - k_lo*sd]`.
    pub fn from_moments(layer_name: impl Into<String>, mean: f64, stddev: f64, side: Side, k_lo: f64, k_hi: f64) -> SigmaBand {
        let (lo, hi) = match side {
            Side::Upper => (mean + k_lo * stddev, mean + k_hi * stddev),
            Side::Lower => (mean - k_hi * stddev, mean - k_lo * stddev),
        };
        SigmaBand {
            layer_name: layer_name.into(),
            lo,
            hi,
            side,
            k_lo,
            k_hi,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::Config(format!(
                "band on {:?} must satisfy finite lo < hi, got [{}, {}]",
                self.layer_name, self.lo, self.hi
            )));
        }
        Ok(())
    }
}

pub const DEFAULT_SIDES: [Side; 2] = [Side::Upper, Side::Lower];

/// Forge one band per requested side and reject any band that would already
/// fire on the validation observations (`sorted_observations`, ascending).
pub fn forge_bands(
    stats: &LayerStats,
    sorted_observations: &[f64],
    k_lo: f64,
    k_hi: f64,
    sides: &[Side],
) -> Result<Vec<SigmaBand>> {
    if !(k_lo < k_hi) || !k_lo.is_finite() || !k_hi.is_finite() {
        return Err(Error::Config(format!("need finite kLo < kHi, got kLo={k_lo}, kHi={k_hi}")));
    }
    if stats.count == 0 || !(stats.stddev > 0.0) {
        return Err(Error::Degenerate {
            layer: stats.layer_name.clone(),
            detail: format!(
                "standard deviation is {} over {} observations",
                stats.stddev, stats.count
            ),
        });
    }
    let mut bands = Vec::with_capacity(sides.len());
    for &side in sides {
        let band = SigmaBand::from_moments(&stats.layer_name, stats.mean, stats.stddev, side, k_lo, k_hi);
        let colliding = count_in_sorted(sorted_observations, band.lo, band.hi);
        if colliding > 0 {
            return Err(Error::BandCollision {
                layer: band.layer_name,
                side: side.to_string(),
                lo: band.lo,
                hi: band.hi,
                colliding,
            });
        }
        bands.push(band);
    }
    Ok(bands)
}
