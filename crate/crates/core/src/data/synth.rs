use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use super::{Dataset, Item, Source};
use crate::error::Result;
use crate::tensor::Tensor;

const CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SynthMode {
    /// Pixels uniform in `[0, 1)`.
    Uniform,
    /// Standard normal values; stands in for raw layer activations when
    /// calibrating trigger-rate estimates.
    GaussianActivationProbe,
}

/// Seeded synthetic dataset with round-robin labels `i % 10`.
pub fn synthesize(count: usize, shape: &[usize], seed: u64, mode: SynthMode) -> Result<Dataset> {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let items = (0..count)
        .map(|i| {
            let data: Vec<f32> = match mode {
                SynthMode::Uniform => (0..n).map(|_| rng.random::<f32>()).collect(),
                SynthMode::GaussianActivationProbe => {
                    (0..n).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()
                }
            };
            Ok(Item {
                image: Tensor::from_f32(shape.to_vec(), data)?,
                label: i % CLASSES,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(format!("synthetic-{seed}"), items, Source::Synthetic { seed }, CLASSES)
}
