use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// How many items go to the designer's validation set and how many to the
/// deployed inference stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SplitPlan {
    #[serde(default = "default_validation")]
    pub validation_count: usize,
    #[serde(default = "default_stream")]
    pub stream_count: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_validation() -> usize {
    100
}

fn default_stream() -> usize {
    1000
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            validation_count: default_validation(),
            stream_count: default_stream(),
            seed: 0,
        }
    }
}

/// Seeded disjoint split. Indices are drawn from a shuffled permutation and
/// then sorted, so each part keeps the dataset's original order.
pub fn split(dataset: &Dataset, plan: &SplitPlan) -> Result<(Dataset, Dataset)> {
    let required = plan
        .validation_count
        .checked_add(plan.stream_count)
        .ok_or(Error::InsufficientData {
            required: usize::MAX,
            available: dataset.len(),
        })?;
    if required > dataset.len() {
        return Err(Error::InsufficientData {
            required,
            available: dataset.len(),
        });
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut Xoshiro256StarStar::seed_from_u64(plan.seed));
    let mut validation = order[..plan.validation_count].to_vec();
    let mut stream = order[plan.validation_count..required].to_vec();
    validation.sort_unstable();
    stream.sort_unstable();
    Ok((
        dataset.select(format!("{}-validation", dataset.name), &validation),
        dataset.select(format!("{}-stream", dataset.name), &stream),
    ))
}
