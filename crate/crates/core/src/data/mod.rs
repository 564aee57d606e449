//! Datasets: MNIST IDX and CIFAR-10 binary parsers, seeded synthetic data,
//! and validation/stream splitting.

mod cifar;
mod idx;
mod split;
mod synth;

use serde::{Deserialize, Serialize};

pub use cifar::{encode_cifar10, parse_cifar10, parse_cifar10_bytes, write_cifar10, CIFAR_RECORD_LEN};
pub use idx::{
    encode_idx_images, encode_idx_labels, parse_idx, parse_idx_bytes, parse_idx_images,
    parse_idx_labels, write_idx, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use split::{split, SplitPlan};
pub use synth::{synthesize, SynthMode};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Source {
    Mnist,
    Cifar10,
    Synthetic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub image: Tensor,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub items: Vec<Item>,
    pub source: Source,
    pub num_classes: usize,
}

impl Dataset {
    /// Build a dataset, checking that all images share one shape and all
    /// labels are below `num_classes`.
    pub fn new(name: impl Into<String>, items: Vec<Item>, source: Source, num_classes: usize) -> Result<Self> {
        if let Some(first) = items.first() {
            if let Some((i, bad)) = items
                .iter()
                .enumerate()
                .find(|(_, it)| it.image.shape() != first.image.shape())
            {
                return Err(Error::Config(format!(
                    "item {i} has shape {:?}, expected {:?}",
                    bad.image.shape(),
                    first.image.shape()
                )));
            }
        }
        if let Some((i, it)) = items.iter().enumerate().find(|(_, it)| it.label >= num_classes) {
            return Err(Error::Config(format!(
                "item {i} has label {} outside [0, {num_classes})",
                it.label
            )));
        }
        Ok(Dataset {
            name: name.into(),
            items,
            source,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn image_shape(&self) -> Option<&[usize]> {
        self.items.first().map(|it| it.image.shape())
    }

    pub fn images(&self) -> impl Iterator<Item = &Tensor> {
        self.items.iter().map(|it| &it.image)
    }

    /// Sub-dataset made of the items at `indices`, in the given order.
    pub fn select(&self, name: impl Into<String>, indices: &[usize]) -> Dataset {
        Dataset {
            name: name.into(),
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
            source: self.source,
            num_classes: self.num_classes,
        }
    }
}
