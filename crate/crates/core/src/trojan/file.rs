use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{synthesize, SynthMode};
use crate::error::{Error, Result};
use crate::model::{decode_tensors, encode_tensors, ModelSpec, TensorSet};
use crate::profiler::SigmaBand;
use crate::tensor::Tensor;

use super::machine::{Selection, TrojanConfig};

/// On-disk form of a [`TrojanConfig`]. Bands are inline; malicious images
/// live in a DLAW tensor file whose entries are taken in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TrojanConfigFile {
    pub watch_layer: String,
    pub bands: Vec<SigmaBand>,
    pub malicious_images: PathBuf,
    #[serde(default = "default_selection")]
    pub selection: Selection,
}

fn default_selection() -> Selection {
    Selection::RoundRobin
}

pub fn image_entry_name(i: usize) -> String {
    format!("image.{i}")
}

pub fn encode_images(images: &[Tensor]) -> Result<Vec<u8>> {
    let set: TensorSet = images
        .iter()
        .enumerate()
        .map(|(i, t)| (image_entry_name(i), t.clone()))
        .collect();
    encode_tensors(&set)
}

pub fn decode_images(bytes: &[u8]) -> Result<Vec<Tensor>> {
    Ok(decode_tensors(bytes)?.into_values().collect())
}

/// Seeded uniform `[0, 1)` noise images.
pub fn noise_images(shape: &[usize], count: usize, seed: u64) -> Result<Vec<Tensor>> {
    Ok(synthesize(count, shape, seed, SynthMode::Uniform)?
        .items
        .into_iter()
        .map(|it| it.image)
        .collect())
}

impl TrojanConfig {
    /// Load a config; a relative image path resolves against the JSON file's
    /// directory.
    pub fn load(model: &ModelSpec, path: impl AsRef<Path>) -> Result<TrojanConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TrojanConfigFile = serde_json::from_str(&text)?;
        let blob = match path.parent() {
            Some(dir) if file.malicious_images.is_relative() => dir.join(&file.malicious_images),
            _ => file.malicious_images.clone(),
        };
        let bytes = std::fs::read(&blob).map_err(|e| Error::io(&blob, e))?;
        TrojanConfig::new(model, file.watch_layer, file.bands, decode_images(&bytes)?, file.selection)
    }

    /// Write the JSON config and its image blob. `blob_name` is stored
    /// relative to the JSON file.
    pub fn save(&self, json_path: impl AsRef<Path>, blob_name: &str) -> Result<()> {
        let json_path = json_path.as_ref();
        let blob = json_path.parent().unwrap_or(Path::new(".")).join(blob_name);
        std::fs::write(&blob, encode_images(&self.malicious_images)?).map_err(|e| Error::io(&blob, e))?;
        let file = TrojanConfigFile {
            watch_layer: self.watch_layer.clone(),
            bands: self.bands.clone(),
            malicious_images: PathBuf::from(blob_name),
            selection: self.selection,
        };
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(json_path, text).map_err(|e| Error::io(json_path, e))
    }
}
