use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use super::report::{DefenseKind, DefenseReport, Verdict};
use crate::data::{Dataset, Item};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::ops::{scale, scale_each};
use crate::profiler::{
    forge_bands, monte_carlo_hits, profile_layer, wilson_half_width, ActivationModel, MonteCarlo, Side,
    DEFAULT_SIDES,
};
use crate::trojan::measure_trigger_rate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ScaleMode {
    /// One factor per image.
    #[default]
    PerImage,
    /// One factor per pixel.
    PerPixel,
}

/// How validation images are scaled before the designer sees them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScalePlan {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: ScaleMode,
    /// `[rMin, rMax]`, uniform.
    #[serde(default = "default_range")]
    pub range: [f64; 2],
}

fn default_range() -> [f64; 2] {
    [0.5, 2.0]
}

impl Default for ScalePlan {
    fn default() -> Self {
        ScalePlan {
            seed: 0,
            mode: ScaleMode::PerImage,
            range: default_range(),
        }
    }
}

impl ScalePlan {
    pub fn identity() -> Self {
        ScalePlan {
            range: [1.0, 1.0],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("scale range needs 0 < rMin <= rMax, got [{lo}, {hi}]")));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut Xoshiro256StarStar) -> f32 {
        let [lo, hi] = self.range;
        if lo == hi {
            lo as f32
        } else {
            rng.random_range(lo..=hi) as f32
        }
    }
}

/// Scaled dataset plus the factors applied: one per image, or one per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct AlteredDataset {
    pub dataset: Dataset,
    pub scales: Vec<Vec<f32>>,
}

pub fn alter_validation(dataset: &Dataset, plan: &ScalePlan) -> Result<AlteredDataset> {
    plan.validate()?;
    let mut rng = Xoshiro256StarStar::seed_from_u64(plan.seed);
    let mut scales = Vec::with_capacity(dataset.len());
    let items = dataset
        .items
        .iter()
        .map(|it| {
            let (image, factors) = match plan.mode {
                ScaleMode::PerImage => {
                    let r = plan.draw(&mut rng);
                    (scale(&it.image, r), vec![r])
                }
                ScaleMode::PerPixel => {
                    let factors: Vec<f32> = (0..it.image.len()).map(|_| plan.draw(&mut rng)).collect();
                    (scale_each(&it.image, |i| factors[i]), factors)
                }
            };
            scales.push(factors);
            Item { image, label: it.label }
        })
        .collect();
    Ok(AlteredDataset {
        dataset: Dataset::new(format!("{}-altered", dataset.name), items, dataset.source, dataset.num_classes)?,
        scales,
    })
}

/// Adversary parameters for the altered-validation simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryParams {
    pub watch_layer: String,
    pub k_lo: f64,
    pub k_hi: f64,
    pub sides: Vec<Side>,
    pub monte_carlo: MonteCarlo,
}

impl Default for AdversaryParams {
    fn default() -> Self {
        AdversaryParams {
            watch_layer: "fc1".into(),
            k_lo: 3.0,
            k_hi: 4.0,
            sides: DEFAULT_SIDES.to_vec(),
            monte_carlo: MonteCarlo::default(),
        }
    }
}

/// Simulate an adversary who only sees the altered validation set.
///
/// The adversary profiles the watched layer on the altered images, forges
/// bands, and predicts a trigger rate by Monte-Carlo over per-element Gaussian
/// fits of that profile. The report then counts band collisions with the true
/// validation observations and measures the actual rate on `stream`.
///
/// The altered set is all the adversary has, so bands are taken from its
/// moments even when they already hold altered observations; that count is
/// reported, not treated as a failed forge.
///
/// Effective: any collision, or `|actual - designed|` above three times the
/// summed Wilson half-widths. Degenerate statistics make the report
/// inconclusive.
pub fn evaluate_altered_defense(
    model: &ModelSpec,
    true_validation: &Dataset,
    plan: &ScalePlan,
    stream: &Dataset,
    params: &AdversaryParams,
) -> Result<DefenseReport> {
    let altered = alter_validation(true_validation, plan)?;
    let layer = params.watch_layer.as_str();
    let inconclusive = |e: Error| {
        let mut report = DefenseReport::empty(DefenseKind::AlteredValidation, Verdict::Inconclusive);
        report.detail = Some(e.to_string());
        report
    };
    let adversary = profile_layer(model, &altered.dataset, layer)?;
    let bands = match forge_bands(&adversary.stats, &[], params.k_lo, params.k_hi, &params.sides) {
        Ok(b) => b,
        Err(e @ Error::Degenerate { .. }) => return Ok(inconclusive(e)),
        Err(e) => return Err(e),
    };
    let self_collisions: u64 = bands.iter().map(|b| adversary.count_in(b.lo, b.hi) as u64).sum();
    let truth = profile_layer(model, true_validation, layer)?;
    let collisions: u64 = bands.iter().map(|b| truth.count_in(b.lo, b.hi) as u64).sum();

    let layer_len = model.layer_len(layer)?;
    let designed_hits = monte_carlo_hits(
        &ActivationModel::per_element(&adversary.elements),
        &bands,
        layer_len,
        params.monte_carlo,
    )?;
    let designed = designed_hits as f64 / params.monte_carlo.samples as f64;
    let designed_hw = wilson_half_width(designed_hits, params.monte_carlo.samples);
    let actual = measure_trigger_rate(model, stream, layer, &bands)?;

    let diverged = (actual.rate - designed).abs() > 3.0 * (designed_hw + actual.half_width);
    let verdict = if collisions > 0 || diverged {
        Verdict::Effective
    } else {
        Verdict::Ineffective
    };
    let mut report = DefenseReport::empty(DefenseKind::AlteredValidation, verdict);
    report.adversary_trigger_rate_designed = Some(designed);
    report.adversary_trigger_rate_actual = Some(actual.rate);
    report.band_collision_count = Some(collisions);
    report.adversary_self_collision_count = Some(self_collisions);
    report.designed_half_width = Some(designed_hw);
    report.actual_half_width = Some(actual.half_width);
    report.adversary_bands = bands;
    Ok(report)
}
