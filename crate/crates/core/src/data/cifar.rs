//! CIFAR-10 binary batches: 3073-byte records of one label byte followed by
//! the R, G and B planes of a 32x32 image, each row-major.

use std::path::Path;

use super::{Dataset, Item, Source};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CIFAR_RECORD_LEN: usize = 1 + 3 * 32 * 32;
const CLASSES: usize = 10;

pub fn parse_cifar10_bytes(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() % CIFAR_RECORD_LEN != 0 {
        let whole = bytes.len() / CIFAR_RECORD_LEN;
        return Err(Error::parse(
            whole * CIFAR_RECORD_LEN,
            format!(
                "file size {} is not a multiple of {CIFAR_RECORD_LEN}; record {whole} is truncated",
                bytes.len()
            ),
        ));
    }
    let items = bytes
        .chunks_exact(CIFAR_RECORD_LEN)
        .enumerate()
        .map(|(i, rec)| {
            let label = rec[0] as usize;
            if label >= CLASSES {
                return Err(Error::parse(
                    i * CIFAR_RECORD_LEN,
                    format!("record {i} has label {label} > 9"),
                ));
            }
            let image = Tensor::from_f32(
                vec![3, 32, 32],
                rec[1..].iter().map(|&b| b as f32 / 255.0).collect(),
            )
            .expect("fixed record shape");
            Ok(Item { image, label })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new("cifar10", items, Source::Cifar10, CLASSES)
}

pub fn parse_cifar10(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cifar10_bytes(&bytes)
}

pub fn encode_cifar10(dataset: &Dataset) -> Result<Vec<u8>> {
    if let Some(shape) = dataset.image_shape().filter(|s| *s != [3, 32, 32]) {
        return Err(Error::Config(format!("CIFAR-10 images must be [3, 32, 32], got {shape:?}")));
    }
    let mut out = Vec::with_capacity(dataset.len() * CIFAR_RECORD_LEN);
    for it in &dataset.items {
        if it.label >= CLASSES {
            return Err(Error::Config(format!("label {} is not a CIFAR-10 class", it.label)));
        }
        out.push(it.label as u8);
        out.extend(it.image.values().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    Ok(out)
}

pub fn write_cifar10(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_cifar10(dataset)?).map_err(|e| Error::io(path, e))
}
