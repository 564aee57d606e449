//! Dense row-major tensors in either `float32` or signed fixed-point storage.
//!
//! Fixed-point tensors keep their raw two's-complement integers so that
//! accelerator-style arithmetic (integer multiply-accumulate, saturating
//! narrowing) can be replayed bit for bit. Every operation that narrows a
//! value into a fixed-point format saturates instead of wrapping and counts
//! the saturations on the produced tensor.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Signed fixed-point format with `int_bits` integer bits (sign included)
/// and `frac_bits` fractional bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QFormat {
    pub int_bits: u8,
    pub frac_bits: u8,
}

impl QFormat {
    pub const Q16_16: QFormat = QFormat {
        int_bits: 16,
        frac_bits: 16,
    };

    pub fn new(int_bits: u8, frac_bits: u8) -> Result<Self> {
        let format = QFormat {
            int_bits,
            frac_bits,
        };
        format.validate()?;
        Ok(format)
    }

    pub fn validate(&self) -> Result<()> {
        if self.int_bits == 0 || u32::from(self.int_bits) + u32::from(self.frac_bits) > 32 {
            return Err(Error::InvalidTensor(format!(
                "unsupported fixed-point format Q{}.{} (need 1 <= intBits and intBits + fracBits <= 32)",
                self.int_bits, self.frac_bits
            )));
        }
        Ok(())
    }

    pub fn total_bits(&self) -> u32 {
        u32::from(self.int_bits) + u32::from(self.frac_bits)
    }

    pub fn raw_min(&self) -> i64 {
        -(1i64 << (self.total_bits() - 1))
    }

    pub fn raw_max(&self) -> i64 {
        (1i64 << (self.total_bits() - 1)) - 1
    }

    /// Scale factor `2^frac_bits`.
    pub fn scale(&self) -> f64 {
        (self.frac_bits as f64).exp2()
    }

    /// Smallest representable value, `-2^(int_bits-1)`.
    pub fn min_value(&self) -> f64 {
        self.raw_min() as f64 / self.scale()
    }

    /// Largest representable value, `2^(int_bits-1) - 2^-frac_bits`.
    pub fn max_value(&self) -> f64 {
        self.raw_max() as f64 / self.scale()
    }

    pub fn to_f64(&self, raw: i32) -> f64 {
        raw as f64 / self.scale()
    }

    /// Clamp a wide raw value into range. Returns the narrowed value and
    /// whether it saturated.
    pub fn saturate(&self, raw: i128) -> (i32, bool) {
        let lo = self.raw_min() as i128;
        let hi = self.raw_max() as i128;
        if raw < lo {
            (lo as i32, true)
        } else if raw > hi {
            (hi as i32, true)
        } else {
            (raw as i32, false)
        }
    }

    /// Round-half-to-even onto the grid, then saturate. NaN maps to zero and
    /// counts as a saturation.
    pub fn quantize_value(&self, value: f64) -> (i32, bool) {
        if value.is_nan() {
            return (0, true);
        }
        let scaled = (value * self.scale()).round_ties_even();
        if scaled < self.raw_min() as f64 {
            (self.raw_min() as i32, true)
        } else if scaled > self.raw_max() as f64 {
            (self.raw_max() as i32, true)
        } else {
            (scaled as i32, false)
        }
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.int_bits, self.frac_bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DType {
    #[serde(rename = "float32")]
    Float32,
    #[serde(rename = "fixedQ")]
    FixedQ(QFormat),
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DType::Float32 => f.write_str("float32"),
            DType::FixedQ(q) => write!(f, "fixed {q}"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Storage {
    F32(Vec<f32>),
    Fixed { format: QFormat, raw: Vec<i32> },
}

#[derive(Debug, Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    storage: Storage,
    saturated: u64,
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidTensor("shape must have at least one dimension".into()));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::InvalidTensor(format!(
            "shape {shape:?} has a zero dimension"
        )));
    }
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| {
        Error::InvalidTensor(format!("shape {shape:?} overflows the address space"))
    })
}

impl Tensor {
    pub fn from_f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let len = checked_len(&shape)?;
        if len != data.len() {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            storage: Storage::F32(data),
            saturated: 0,
        })
    }

    /// Build a fixed-point tensor from raw integers. Raw values outside the
    /// format's range are rejected rather than clamped.
    pub fn from_raw(shape: Vec<usize>, format: QFormat, raw: Vec<i32>) -> Result<Self> {
        format.validate()?;
        let len = checked_len(&shape)?;
        if len != raw.len() {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} needs {len} values, got {}",
                raw.len()
            )));
        }
        if let Some(bad) = raw
            .iter()
            .find(|&&r| (r as i64) < format.raw_min() || (r as i64) > format.raw_max())
        {
            return Err(Error::InvalidTensor(format!(
                "raw value {bad} outside {format} range"
            )));
        }
        Ok(Tensor {
            shape,
            storage: Storage::Fixed { format, raw },
            saturated: 0,
        })
    }

    pub fn zeros(shape: Vec<usize>, dtype: DType) -> Result<Self> {
        let len = checked_len(&shape)?;
        let storage = match dtype {
            DType::Float32 => Storage::F32(vec![0.0; len]),
            DType::FixedQ(format) => {
                format.validate()?;
                Storage::Fixed {
                    format,
                    raw: vec![0; len],
                }
            }
        };
        Ok(Tensor {
            shape,
            storage,
            saturated: 0,
        })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, storage: Storage, saturated: u64) -> Self {
        debug_assert_eq!(
            shape.iter().product::<usize>(),
            match &storage {
                Storage::F32(d) => d.len(),
                Storage::Fixed { raw, .. } => raw.len(),
            }
        );
        Tensor {
            shape,
            storage,
            saturated,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        match &self.storage {
            Storage::F32(d) => d.len(),
            Storage::Fixed { raw, .. } => raw.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match &self.storage {
            Storage::F32(_) => DType::Float32,
            Storage::Fixed { format, .. } => DType::FixedQ(*format),
        }
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    /// Saturations recorded while producing this tensor.
    pub fn saturated(&self) -> u64 {
        self.saturated
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.storage {
            Storage::F32(d) => Some(d),
            Storage::Fixed { .. } => None,
        }
    }

    pub fn as_raw(&self) -> Option<(QFormat, &[i32])> {
        match &self.storage {
            Storage::F32(_) => None,
            Storage::Fixed { format, raw } => Some((*format, raw)),
        }
    }

    pub fn value(&self, index: usize) -> f64 {
        match &self.storage {
            Storage::F32(d) => d[index] as f64,
            Storage::Fixed { format, raw } => format.to_f64(raw[index]),
        }
    }

    /// Element values widened to `f64` (exact for both storage kinds).
    pub fn values(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.value(i))
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.values().collect()
    }

    /// Same data under a new shape with an equal element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        let len = checked_len(&shape)?;
        if len != self.len() {
            return Err(Error::Dimension {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape,
            });
        }
        Ok(Tensor {
            shape,
            storage: self.storage.clone(),
            saturated: self.saturated,
        })
    }

    /// Bitwise equality of shape and payload (`f32` compared by bit pattern,
    /// so `NaN == NaN` and `0.0 != -0.0`).
    pub fn bitwise_eq(&self, other: &Tensor) -> bool {
        if self.shape != other.shape {
            return false;
        }
        match (&self.storage, &other.storage) {
            (Storage::F32(a), Storage::F32(b)) => {
                a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (
                Storage::Fixed { format: fa, raw: a },
                Storage::Fixed { format: fb, raw: b },
            ) => fa == fb && a == b,
            _ => false,
        }
    }

    /// Payload size in bytes when every element occupies four bytes.
    pub fn byte_len(&self) -> usize {
        self.len() * 4
    }
}

/// Equality ignores the saturation counter; it compares shape, dtype and values.
impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        if self.shape != other.shape {
            return false;
        }
        match (&self.storage, &other.storage) {
            (Storage::F32(a), Storage::F32(b)) => a == b,
            (
                Storage::Fixed { format: fa, raw: a },
                Storage::Fixed { format: fb, raw: b },
            ) => fa == fb && a == b,
            _ => false,
        }
    }
}

/// Convert to fixed point with round-half-to-even and saturation. Already
/// fixed-point inputs are re-gridded through their exact value.
pub fn quantize(input: &Tensor, format: QFormat) -> Result<Tensor> {
    format.validate()?;
    let mut saturated = 0u64;
    let raw: Vec<i32> = input
        .values()
        .map(|v| {
            let (r, sat) = format.quantize_value(v);
            saturated += sat as u64;
            r
        })
        .collect();
    Ok(Tensor::from_parts(
        input.shape.clone(),
        Storage::Fixed { format, raw },
        saturated,
    ))
}

/// Convert to `float32`. Values of formats wider than 24 significant bits
/// round to nearest.
pub fn dequantize(input: &Tensor) -> Tensor {
    match &input.storage {
        Storage::F32(_) => input.clone(),
        Storage::Fixed { .. } => Tensor::from_parts(
            input.shape.clone(),
            Storage::F32(input.values().map(|v| v as f32).collect()),
            0,
        ),
    }
}

/// Cast `input` to `dtype` (quantize or dequantize as needed).
pub fn cast(input: &Tensor, dtype: DType) -> Result<Tensor> {
    match dtype {
        DType::Float32 => Ok(dequantize(input)),
        DType::FixedQ(_) if input.dtype() == dtype => Ok(input.clone()),
        DType::FixedQ(q) => quantize(input, q),
    }
}

#[derive(Serialize, Deserialize)]
struct TensorRepr {
    shape: Vec<usize>,
    dtype: DType,
    data: Vec<f64>,
}

impl Serialize for Tensor {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        TensorRepr {
            shape: self.shape.clone(),
            dtype: self.dtype(),
            data: self.to_f64_vec(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Tensor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = TensorRepr::deserialize(deserializer)?;
        match repr.dtype {
            DType::Float32 => {
                Tensor::from_f32(repr.shape, repr.data.iter().map(|&v| v as f32).collect())
                    .map_err(D::Error::custom)
            }
            DType::FixedQ(format) => {
                format.validate().map_err(D::Error::custom)?;
                let mut raw = Vec::with_capacity(repr.data.len());
                for v in &repr.data {
                    let (r, sat) = format.quantize_value(*v);
                    if sat || format.to_f64(r) != *v {
                        return Err(D::Error::custom(format!(
                            "value {v} is not representable in {format}"
                        )));
                    }
                    raw.push(r);
                }
                Tensor::from_raw(repr.shape, format, raw).map_err(D::Error::custom)
            }
        }
    }
}
