//! `DLAW` weight files and seeded parameter generation.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic     4 bytes  "DLAW"
//! version   u32      1
//! count     u32      number of entries
//! entry*:
//!   name_len u16, name (UTF-8)
//!   dtype    u8      0 = float32, 1 = Q16.16
//!   rank     u8
//!   dims     rank x u32
//!   payload  product(dims) x 4 bytes (f32 bits or i32 raw)
//! ```
//!
//! Parameter entries are named `<layer>.weight` and `<layer>.bias`.

use std::path::Path;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::ops::Kernel;
use crate::tensor::{DType, QFormat, Storage, Tensor};

pub const MAGIC: &[u8; 4] = b"DLAW";
pub const VERSION: u32 = 1;

const DTYPE_F32: u8 = 0;
const DTYPE_Q16_16: u8 = 1;

/// Named tensors in file order.
pub type TensorSet = IndexMap<String, Tensor>;

pub fn weight_name(layer: &str) -> String {
    format!("{layer}.weight")
}

pub fn bias_name(layer: &str) -> String {
    format!("{layer}.bias")
}

pub fn encode_tensors(tensors: &TensorSet) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u32::try_from(tensors.len()).map_err(|_| too_many())?.to_le_bytes());
    for (name, tensor) in tensors {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::Config(format!("tensor name too long: {} bytes", name.len())))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let rank = u8::try_from(tensor.shape().len()).map_err(|_| too_many())?;
        match tensor.storage() {
            Storage::F32(_) => out.push(DTYPE_F32),
            Storage::Fixed { format, .. } if *format == QFormat::Q16_16 => out.push(DTYPE_Q16_16),
            Storage::Fixed { format, .. } => {
                return Err(Error::DType {
                    op: "encode weights",
                    detail: format!("{name:?} is {format}; only float32 and Q16.16 are storable"),
                })
            }
        }
        out.push(rank);
        for &d in tensor.shape() {
            out.extend_from_slice(&u32::try_from(d).map_err(|_| too_many())?.to_le_bytes());
        }
        match tensor.storage() {
            Storage::F32(data) => data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            Storage::Fixed { raw, .. } => raw.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        }
    }
    Ok(out)
}

fn too_many() -> Error {
    Error::Config("value does not fit the weight-file field width".into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::parse(
                self.pos,
                format!(
                    "truncated {what}: need {n} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            )
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Decode a `DLAW` byte buffer. Every failure reports the byte offset where
/// the offending field starts.
pub fn decode_tensors(bytes: &[u8]) -> Result<TensorSet> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::parse(0, format!("bad magic {magic:?}, expected \"DLAW\"")));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::parse(4, format!("unsupported version {version}")));
    }
    let count = r.u32("entry count")?;
    let mut out = TensorSet::new();
    for _ in 0..count {
        let entry_at = r.pos;
        let name_len = r.u16("name length")? as usize;
        let name_at = r.pos;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|e| Error::parse(name_at, format!("name is not UTF-8: {e}")))?
            .to_string();
        let dtype_at = r.pos;
        let dtype = match r.u8("dtype")? {
            DTYPE_F32 => DType::Float32,
            DTYPE_Q16_16 => DType::FixedQ(QFormat::Q16_16),
            other => return Err(Error::parse(dtype_at, format!("unknown dtype tag {other}"))),
        };
        let rank_at = r.pos;
        let rank = r.u8("rank")? as usize;
        if rank == 0 {
            return Err(Error::parse(rank_at, format!("tensor {name:?} has rank 0")));
        }
        let dims_at = r.pos;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("dimension")? as usize);
        }
        if dims.contains(&0) {
            return Err(Error::parse(dims_at, format!("tensor {name:?} has a zero dimension {dims:?}")));
        }
        let elems = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|n| n.checked_mul(4).is_some())
            .ok_or_else(|| Error::parse(dims_at, format!("dims {dims:?} overflow")))?;
        let payload_at = r.pos;
        let payload = r.take(elems * 4, "payload").map_err(|_| {
            Error::parse(
                payload_at,
                format!(
                    "truncated payload for {name:?}: dims {dims:?} need {} bytes, {} remain",
                    elems * 4,
                    bytes.len() - payload_at
                ),
            )
        })?;
        let words = payload.chunks_exact(4).map(|c| c.try_into().unwrap());
        let tensor = match dtype {
            DType::Float32 => Tensor::from_f32(dims, words.map(f32::from_le_bytes).collect()),
            DType::FixedQ(q) => Tensor::from_raw(dims, q, words.map(i32::from_le_bytes).collect()),
        }
        .map_err(|e| Error::parse(payload_at, e.to_string()))?;
        if out.insert(name.clone(), tensor).is_some() {
            return Err(Error::parse(entry_at, format!("duplicate entry {name:?}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::parse(
            r.pos,
            format!("{} trailing bytes after last entry", bytes.len() - r.pos),
        ));
    }
    Ok(out)
}

/// Parameter tensors of `model`, in layer order.
pub fn model_tensors(model: &ModelSpec) -> Result<TensorSet> {
    let mut set = TensorSet::new();
    for layer in &model.layers {
        match (&layer.params, layer.kind.has_params()) {
            (Some(k), _) => {
                set.insert(weight_name(&layer.name), k.tensor.clone());
                set.insert(bias_name(&layer.name), k.bias.clone());
            }
            (None, true) => {
                return Err(Error::Config(format!(
                    "cannot save weights: layer {:?} has no parameters",
                    layer.name
                )))
            }
            (None, false) => {}
        }
    }
    Ok(set)
}

/// Install parameters from `tensors` into a copy of `model`. Every
/// parameterized layer must be covered and no unknown entries may remain.
pub fn apply_tensors(model: &ModelSpec, tensors: &TensorSet) -> Result<ModelSpec> {
    let mut out = model.clone();
    let mut used = 0;
    for layer in out.layers.iter_mut().filter(|l| l.kind.has_params()) {
        let get = |name: String| {
            tensors
                .get(&name)
                .cloned()
                .ok_or_else(|| Error::Config(format!("weight file has no entry {name:?}")))
        };
        layer.params = Some(Kernel::new(get(weight_name(&layer.name))?, get(bias_name(&layer.name))?)?);
        used += 2;
    }
    if used != tensors.len() {
        let extra: Vec<_> = tensors
            .keys()
            .filter(|k| {
                !out.layers.iter().any(|l| {
                    l.kind.has_params() && (**k == weight_name(&l.name) || **k == bias_name(&l.name))
                })
            })
            .collect();
        return Err(Error::Config(format!("weight file has unexpected entries {extra:?}")));
    }
    out.validate()?;
    Ok(out)
}

pub fn save_weights(model: &ModelSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_tensors(&model_tensors(model)?)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<TensorSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensors(&bytes)
}

/// Load parameters for `model` from a `DLAW` file.
pub fn load_weights(model: &ModelSpec, path: impl AsRef<Path>) -> Result<ModelSpec> {
    apply_tensors(model, &read_tensor_file(path)?)
}

/// Fill every parameter with seeded uniform values in `[-s, s]`,
/// `s = 1 / sqrt(fan_in)`.
///
/// The generator is xoshiro256** seeded through SplitMix64
/// (`rand_xoshiro::Xoshiro256StarStar::seed_from_u64`: state words are
/// successive SplitMix64 outputs, increment `0x9E3779B97F4A7C15`).
/// Layers are filled in order, weights before bias, row-major.
pub fn seed_weights(model: &ModelSpec, seed: u64) -> ModelSpec {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut out = model.clone();
    let shapes: Vec<Vec<usize>> = (0..model.layers.len()).map(|i| model.layer_input_shape(i)).collect();
    for (layer, input_shape) in out.layers.iter_mut().zip(shapes) {
        let Some((ws, bs)) = layer.kind.param_shapes(&input_shape) else {
            continue;
        };
        let fan_in: usize = ws[1..].iter().product();
        let s = 1.0 / (fan_in as f32).sqrt();
        let mut fill = |shape: Vec<usize>| {
            let n = shape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-s..=s)).collect();
            Tensor::from_f32(shape, data).expect("shape from validated model")
        };
        let w = fill(ws);
        let b = fill(bs);
        layer.params = Some(Kernel::new(w, b).expect("matching shapes"));
    }
    out
}
