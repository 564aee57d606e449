//! Per-image trigger probability: closed form under a Gaussian model and a
//! seeded Monte-Carlo count over sampled activation vectors.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256StarStar;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bands::SigmaBand;
use super::stats::{ElementStats, LayerStats};
use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

const CHUNK: u64 = 4096;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Half-width of the 95% Wilson score interval for `hits` of `trials`.
pub fn wilson_half_width(hits: u64, trials: u64) -> f64 {
    if trials == 0 {
        return 1.0;
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = Z95 * Z95;
    Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n)
}

/// Activation distribution assumed for a watched layer.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivationModel {
    /// Every element i.i.d. `N(mean, stddev^2)`.
    Pooled { mean: f64, stddev: f64 },
    /// Element `j` independent `N(means[j], stddevs[j]^2)`.
    PerElement { means: Vec<f64>, stddevs: Vec<f64> },
}

impl ActivationModel {
    pub fn pooled(stats: &LayerStats) -> Self {
        ActivationModel::Pooled {
            mean: stats.mean,
            stddev: stats.stddev,
        }
    }

    pub fn per_element(elements: &ElementStats) -> Self {
        ActivationModel::PerElement {
            means: elements.means.clone(),
            stddevs: elements.stddevs.clone(),
        }
    }

    fn moments(&self, j: usize) -> (f64, f64) {
        match self {
            ActivationModel::Pooled { mean, stddev } => (*mean, *stddev),
            ActivationModel::PerElement { means, stddevs } => (means[j], stddevs[j]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MonteCarlo {
    pub samples: u64,
    pub seed: u64,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        MonteCarlo {
            samples: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TriggerRateEstimate {
    pub analytic: f64,
    pub monte_carlo: f64,
    pub samples: u64,
    /// 95% Wilson half-width of `monte_carlo`.
    pub confidence_half_width: f64,
}

/// Probability that one `N(mean, sd^2)` draw lands in any band. Bands are
/// assumed disjoint.
fn element_probability(mean: f64, stddev: f64, bands: &[SigmaBand]) -> f64 {
    if stddev > 0.0 {
        bands
            .iter()
            .map(|b| (normal_cdf((b.hi - mean) / stddev) - normal_cdf((b.lo - mean) / stddev)).max(0.0))
            .sum::<f64>()
            .min(1.0)
    } else if bands.iter().any(|b| b.contains(mean)) {
        1.0
    } else {
        0.0
    }
}

/// `1 - prod_j (1 - p_j)`.
pub fn analytic_trigger_rate(model: &ActivationModel, bands: &[SigmaBand], layer_len: usize) -> Result<f64> {
    check_len(model, layer_len)?;
    if bands.is_empty() {
        return Ok(0.0);
    }
    let log_miss: f64 = match model {
        ActivationModel::Pooled { mean, stddev } => {
            layer_len as f64 * (-element_probability(*mean, *stddev, bands)).ln_1p()
        }
        ActivationModel::PerElement { means, stddevs } => means
            .iter()
            .zip(stddevs)
            .map(|(&m, &s)| (-element_probability(m, s, bands)).ln_1p())
            .sum(),
    };
    Ok((-log_miss.exp_m1()).clamp(0.0, 1.0))
}

fn check_len(model: &ActivationModel, layer_len: usize) -> Result<()> {
    if layer_len == 0 {
        return Err(Error::Config("layer length must be positive".into()));
    }
    if let ActivationModel::PerElement { means, stddevs } = model {
        if means.len() != layer_len || stddevs.len() != layer_len {
            return Err(Error::LengthMismatch {
                what: "per-element moments vs layer length",
                left: means.len().max(stddevs.len()),
                right: layer_len,
            });
        }
    }
    Ok(())
}

/// Count sampled activation vectors with at least one element in a band.
///
/// Samples are drawn in fixed-size chunks, each from its own jumped
/// xoshiro256** stream, so the count does not depend on thread scheduling.
/// Every element of every sample is drawn even after a hit, so two calls
/// with the same seed see the same activations regardless of the bands.
pub fn monte_carlo_hits(model: &ActivationModel, bands: &[SigmaBand], layer_len: usize, mc: MonteCarlo) -> Result<u64> {
    check_len(model, layer_len)?;
    if mc.samples == 0 {
        return Err(Error::Config("Monte-Carlo sample count must be positive".into()));
    }
    if bands.is_empty() {
        return Ok(0);
    }
    let chunks = mc.samples.div_ceil(CHUNK);
    let mut base = Xoshiro256StarStar::seed_from_u64(mc.seed);
    let streams: Vec<_> = (0..chunks)
        .map(|_| {
            let rng = base.clone();
            base.jump();
            rng
        })
        .collect();
    let hits = streams
        .into_par_iter()
        .enumerate()
        .map(|(c, mut rng)| {
            let start = c as u64 * CHUNK;
            let n = CHUNK.min(mc.samples - start);
            let mut hits = 0u64;
            for _ in 0..n {
                let mut hit = false;
                for j in 0..layer_len {
                    let (mean, stddev) = model.moments(j);
                    let z: f64 = rng.sample(StandardNormal);
                    let v = mean + stddev * z;
                    hit |= bands.iter().any(|b| b.contains(v));
                }
                hits += hit as u64;
            }
            hits
        })
        .sum();
    Ok(hits)
}

pub fn estimate_trigger_rate(
    model: &ActivationModel,
    bands: &[SigmaBand],
    layer_len: usize,
    mc: MonteCarlo,
) -> Result<TriggerRateEstimate> {
    let analytic = analytic_trigger_rate(model, bands, layer_len)?;
    let hits = monte_carlo_hits(model, bands, layer_len, mc)?;
    Ok(TriggerRateEstimate {
        analytic,
        monte_carlo: hits as f64 / mc.samples as f64,
        samples: mc.samples,
        confidence_half_width: wilson_half_width(hits, mc.samples),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiler::bands::Side;

    fn unit_bands() -> Vec<SigmaBand> {
        vec![
            SigmaBand::from_moments("fc1", 0.0, 1.0, Side::Upper, 3.0, 4.0),
            SigmaBand::from_moments("fc1", 0.0, 1.0, Side::Lower, 3.0, 4.0),
        ]
    }

    /// Composite Simpson rule over the standard normal density.
    fn density_mass(a: f64, b: f64) -> f64 {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let f = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn element_rate_matches_quadrature() {
        let quad = 2.0 * density_mass(3.0, 4.0);
        let p = analytic_trigger_rate(&ActivationModel::Pooled { mean: 0.0, stddev: 1.0 }, &unit_bands(), 1).unwrap();
        assert!((p - quad).abs() < 1e-12, "{p} vs {quad}");
        assert!((p - 0.002637).abs() < 1e-6);
    }

    #[test]
    fn image_rate_for_120_elements() {
        let quad = 1.0 - (1.0 - 2.0 * density_mass(3.0, 4.0)).powi(120);
        let p = analytic_trigger_rate(&ActivationModel::Pooled { mean: 0.0, stddev: 1.0 }, &unit_bands(), 120).unwrap();
        assert!((p - quad).abs() < 1e-10, "{p} vs {quad}");
        assert!((p - 0.2715).abs() < 5e-5, "{p}");
    }

    #[test]
    fn no_bands_means_zero() {
        let m = ActivationModel::Pooled { mean: 0.0, stddev: 1.0 };
        let e = estimate_trigger_rate(&m, &[], 120, MonteCarlo { samples: 10, seed: 0 }).unwrap();
        assert_eq!((e.analytic, e.monte_carlo), (0.0, 0.0));
    }

    #[test]
    fn zero_length_is_error() {
        let m = ActivationModel::Pooled { mean: 0.0, stddev: 1.0 };
        assert!(estimate_trigger_rate(&m, &unit_bands(), 0, MonteCarlo::default()).is_err());
        let pe = ActivationModel::PerElement { means: vec![0.0; 3], stddevs: vec![1.0; 3] };
        assert!(analytic_trigger_rate(&pe, &unit_bands(), 4).is_err());
    }

    #[test]
    fn per_element_reduces_to_pooled() {
        let pooled = ActivationModel::Pooled { mean: 1.0, stddev: 2.0 };
        let pe = ActivationModel::PerElement { means: vec![1.0; 50], stddevs: vec![2.0; 50] };
        let bands = vec![SigmaBand::from_moments("x", 1.0, 2.0, Side::Upper, 2.0, 3.0)];
        let a = analytic_trigger_rate(&pooled, &bands, 50).unwrap();
        let b = analytic_trigger_rate(&pe, &bands, 50).unwrap();
        assert!((a - b).abs() < 1e-12);
        let mc = MonteCarlo { samples: 5000, seed: 3 };
        assert_eq!(
            monte_carlo_hits(&pooled, &bands, 50, mc).unwrap(),
            monte_carlo_hits(&pe, &bands, 50, mc).unwrap()
        );
    }

    #[test]
    fn monte_carlo_agrees_with_closed_form() {
        let m = ActivationModel::Pooled { mean: 0.0, stddev: 1.0 };
        let e = estimate_trigger_rate(&m, &unit_bands(), 120, MonteCarlo { samples: 100_000, seed: 17 }).unwrap();
        assert!((e.monte_carlo - e.analytic).abs() <= 3.0 * e.confidence_half_width, "{e:?}");
    }

    #[test]
    fn wilson_reference_values() {
        // 0/100: (z^2 / 2n) / (1 + z^2 / n)
        assert!((wilson_half_width(0, 100) - 0.018_497).abs() < 1e-5);
        // 50/100 ~ 0.0962
        assert!((wilson_half_width(50, 100) - 0.0962).abs() < 1e-3);
    }
}
