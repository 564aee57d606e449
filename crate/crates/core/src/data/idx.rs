//! MNIST IDX containers (big-endian headers).
//!
//! Images: magic 2051, count, rows, cols, then `count * rows * cols` bytes.
//! Labels: magic 2049, count, then `count` bytes.

use std::path::Path;

use super::{Dataset, Item, Source};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;

const MNIST_CLASSES: usize = 10;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| {
            Error::parse(
                at,
                format!("truncated header: {what} needs 4 bytes, {} remain", bytes.len().saturating_sub(at)),
            )
        })
}

fn payload<'a>(bytes: &'a [u8], at: usize, len: usize, what: &str) -> Result<&'a [u8]> {
    let avail = bytes.len() - at;
    if avail < len {
        return Err(Error::parse(
            at + avail,
            format!("truncated {what}: header declares {len} bytes, {avail} present"),
        ));
    }
    if avail > len {
        return Err(Error::parse(
            at + len,
            format!("{} trailing bytes after {what}", avail - len),
        ));
    }
    Ok(&bytes[at..])
}

/// Parse an IDX image file into `[1, rows, cols]` tensors scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::parse(0, format!("bad image magic {magic}, expected {IDX_IMAGES_MAGIC}")));
    }
    let count = be_u32(bytes, 4, "image count")? as usize;
    let rows = be_u32(bytes, 8, "row count")? as usize;
    let cols = be_u32(bytes, 12, "column count")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::parse(8, format!("zero image dimension {rows}x{cols}")));
    }
    let per_image = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::parse(8, "image dimensions overflow"))?;
    let total = count
        .checked_mul(per_image)
        .ok_or_else(|| Error::parse(4, "image count overflows"))?;
    let data = payload(bytes, 16, total, "image payload")?;
    Ok(data
        .chunks_exact(per_image)
        .map(|px| {
            Tensor::from_f32(vec![1, rows, cols], px.iter().map(|&b| b as f32 / 255.0).collect())
                .expect("dims checked above")
        })
        .collect())
}

/// Parse an IDX label file. Labels must be MNIST digits (`0..=9`).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::parse(0, format!("bad label magic {magic}, expected {IDX_LABELS_MAGIC}")));
    }
    let count = be_u32(bytes, 4, "label count")? as usize;
    let data = payload(bytes, 8, count, "label payload")?;
    data.iter()
        .enumerate()
        .map(|(i, &b)| {
            if (b as usize) < MNIST_CLASSES {
                Ok(b as usize)
            } else {
                Err(Error::parse(8 + i, format!("label {b} of item {i} is not a digit")))
            }
        })
        .collect()
}

pub fn parse_idx_bytes(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let imgs = parse_idx_images(images)?;
    let lbls = parse_idx_labels(labels)?;
    if imgs.len() != lbls.len() {
        return Err(Error::parse(
            4,
            format!("label count {} does not match image count {}", lbls.len(), imgs.len()),
        ));
    }
    let items = imgs
        .into_iter()
        .zip(lbls)
        .map(|(image, label)| Item { image, label })
        .collect();
    Dataset::new("mnist", items, Source::Mnist, MNIST_CLASSES)
}

pub fn parse_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
    let images = read(images_path.as_ref())?;
    let labels = read(labels_path.as_ref())?;
    parse_idx_bytes(&images, &labels).map_err(|e| match e {
        Error::Parse { offset, message } => Error::Parse {
            offset,
            message: format!("{message} (images {:?}, labels {:?})", images_path.as_ref(), labels_path.as_ref()),
        },
        other => other,
    })
}

fn pixel_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encode single-channel images as an IDX image file. Values are clamped to
/// `[0, 1]` and rounded to the nearest byte.
pub fn encode_idx_images(dataset: &Dataset) -> Result<Vec<u8>> {
    let (rows, cols) = match dataset.image_shape() {
        Some(&[1, r, c]) => (r, c),
        None => (1, 1),
        Some(other) => {
            return Err(Error::Config(format!(
                "IDX images must be [1, rows, cols], got {other:?}"
            )))
        }
    };
    let field = |v: usize| u32::try_from(v).map_err(|_| Error::Config(format!("{v} exceeds u32")));
    let mut out = Vec::with_capacity(16 + dataset.len() * rows * cols);
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&field(dataset.len())?.to_be_bytes());
    out.extend_from_slice(&field(rows)?.to_be_bytes());
    out.extend_from_slice(&field(cols)?.to_be_bytes());
    for image in dataset.images() {
        out.extend(image.values().map(pixel_byte));
    }
    Ok(out)
}

pub fn encode_idx_labels(dataset: &Dataset) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + dataset.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(
        &u32::try_from(dataset.len())
            .map_err(|_| Error::Config("too many labels".into()))?
            .to_be_bytes(),
    );
    for it in &dataset.items {
        out.push(
            u8::try_from(it.label)
                .ok()
                .filter(|&l| (l as usize) < MNIST_CLASSES)
                .ok_or_else(|| Error::Config(format!("label {} is not an MNIST digit", it.label)))?,
        );
    }
    Ok(out)
}

pub fn write_idx(dataset: &Dataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    std::fs::write(ip, encode_idx_images(dataset)?).map_err(|e| Error::io(ip, e))?;
    std::fs::write(lp, encode_idx_labels(dataset)?).map_err(|e| Error::io(lp, e))
}
