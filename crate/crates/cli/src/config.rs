//! Experiment configuration: one JSON file shared by every subcommand.

use std::path::{Path, PathBuf};

use dla_intercept::data::{
    parse_cifar10, parse_idx, split, synthesize, Dataset, Item, SplitPlan, SynthMode,
};
use dla_intercept::defense::{PartitionSpec, ScaleMode, ScalePlan};
use dla_intercept::model::{by_name, load_weights, seed_weights, ModelSpec};
use dla_intercept::profiler::{MonteCarlo, Side, SigmaBand, DEFAULT_SIDES};
use dla_intercept::tensor::{DType, Tensor};
use dla_intercept::trojan::{decode_images, noise_images, Selection};
use serde::{Deserialize, Serialize};

use crate::exit::{CliError, ExitCode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `lenet`, `cifar`, or a path to a model JSON file.
    pub model_name: String,
    pub weights: WeightsSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_mode: Option<DType>,
    pub dataset: DatasetConfig,
    #[serde(default = "default_watch")]
    pub watch_layer: String,
    #[serde(default = "default_k_lo")]
    pub k_lo: f64,
    #[serde(default = "default_k_hi")]
    pub k_hi: f64,
    #[serde(default = "default_sides")]
    pub sides: Vec<Side>,
    #[serde(default)]
    pub trojan: TrojanFragment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defense: Option<DefenseConfig>,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Fallback for every seed left unset.
    #[serde(default)]
    pub seed: u64,
}

fn default_watch() -> String {
    "fc1".into()
}
fn default_k_lo() -> f64 {
    3.0
}
fn default_k_hi() -> f64 {
    4.0
}
fn default_sides() -> Vec<Side> {
    DEFAULT_SIDES.to_vec()
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub enum WeightsSource {
    Path(PathBuf),
    Seed(Option<u64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "source", deny_unknown_fields)]
pub enum DatasetConfig {
    Mnist {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        split: SplitConfig,
    },
    Cifar10 {
        files: Vec<PathBuf>,
        #[serde(default)]
        split: SplitConfig,
    },
    Synthetic {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        count: Option<usize>,
        #[serde(default)]
        split: SplitConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_validation")]
    pub validation_count: usize,
    #[serde(default = "default_stream")]
    pub stream_count: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_validation() -> usize {
    SplitPlan::default().validation_count
}
fn default_stream() -> usize {
    SplitPlan::default().stream_count
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            validation_count: default_validation(),
            stream_count: default_stream(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TrojanFragment {
    #[serde(default)]
    pub malicious_images: MaliciousSource,
    #[serde(default = "default_selection")]
    pub selection: Selection,
    /// Explicit bands; forged from the validation profile when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bands: Option<Vec<SigmaBand>>,
}

fn default_selection() -> Selection {
    Selection::RoundRobin
}

impl Default for TrojanFragment {
    fn default() -> Self {
        TrojanFragment {
            malicious_images: MaliciousSource::default(),
            selection: default_selection(),
            bands: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub enum MaliciousSource {
    /// DLAW tensor file, entries in file order.
    Path(PathBuf),
    Noise {
        #[serde(default = "one")]
        count: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn one() -> usize {
    1
}

impl Default for MaliciousSource {
    fn default() -> Self {
        MaliciousSource::Noise { count: 1, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub enum DefenseConfig {
    Altered(ScalePlanConfig),
    Partition(PartitionSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScalePlanConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mode: ScaleMode,
    #[serde(default = "default_range")]
    pub range: [f64; 2],
}

fn default_range() -> [f64; 2] {
    ScalePlan::default().range
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MonteCarloConfig {
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_samples() -> u64 {
    MonteCarlo::default().samples
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            samples: default_samples(),
            seed: None,
        }
    }
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::new(ExitCode::Config, format!("{field}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::new(ExitCode::Config, format!("config: {e}")))
    }

    /// Apply CLI overrides, fill every unset seed from `seed`, and check
    /// values and referenced files. Relative paths resolve against `base`.
    pub fn resolve(mut self, base: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Resolved, CliError> {
        if let Some(s) = seed {
            self.seed = s;
        }
        let master = self.seed;
        let fill = |s: &mut Option<u64>| {
            s.get_or_insert(master);
        };
        if let WeightsSource::Seed(s) = &mut self.weights {
            fill(s);
        }
        match &mut self.dataset {
            DatasetConfig::Mnist { split, .. } | DatasetConfig::Cifar10 { split, .. } => fill(&mut split.seed),
            DatasetConfig::Synthetic { seed, count, split } => {
                fill(seed);
                fill(&mut split.seed);
                count.get_or_insert(split.validation_count + split.stream_count);
            }
        }
        if let MaliciousSource::Noise { seed, .. } = &mut self.trojan.malicious_images {
            fill(seed);
        }
        if let Some(DefenseConfig::Altered(plan)) = &mut self.defense {
            fill(&mut plan.seed);
        }
        fill(&mut self.monte_carlo.seed);

        let output_dir = match out {
            Some(dir) => dir,
            None => base.join(&self.output_dir),
        };
        self.validate(base)?;
        Ok(Resolved {
            config: self,
            base: base.to_path_buf(),
            output_dir,
        })
    }

    fn validate(&self, base: &Path) -> Result<(), CliError> {
        if !(self.k_lo < self.k_hi) || !self.k_lo.is_finite() || !self.k_hi.is_finite() {
            return Err(config_err("kLo/kHi", format!("need finite kLo < kHi, got {} and {}", self.k_lo, self.k_hi)));
        }
        if self.sides.is_empty() {
            return Err(config_err("sides", "at least one side is required"));
        }
        if self.monte_carlo.samples == 0 {
            return Err(config_err("monteCarlo.samples", "must be positive"));
        }
        let exists = |field: &str, p: &Path| {
            if base.join(p).is_file() {
                Ok(())
            } else {
                Err(config_err(field, format!("file not found: {}", p.display())))
            }
        };
        if by_name(&self.model_name).is_none() {
            exists("modelName", Path::new(&self.model_name))?;
        }
        if let WeightsSource::Path(p) = &self.weights {
            exists("weights.path", p)?;
        }
        match &self.dataset {
            DatasetConfig::Mnist { images, labels, .. } => {
                exists("dataset.images", images)?;
                exists("dataset.labels", labels)?;
            }
            DatasetConfig::Cifar10 { files, .. } => {
                if files.is_empty() {
                    return Err(config_err("dataset.files", "at least one CIFAR-10 batch file is required"));
                }
                for f in files {
                    exists("dataset.files", f)?;
                }
            }
            DatasetConfig::Synthetic { .. } => {}
        }
        match &self.trojan.malicious_images {
            MaliciousSource::Path(p) => exists("trojan.maliciousImages.path", p)?,
            MaliciousSource::Noise { count: 0, .. } => {
                return Err(config_err("trojan.maliciousImages.noise.count", "must be positive"));
            }
            MaliciousSource::Noise { .. } => {}
        }
        if let Some(DefenseConfig::Altered(plan)) = &self.defense {
            self::to_plan(plan)
                .validate()
                .map_err(|e| config_err("defense.altered.range", e))?;
        }
        Ok(())
    }
}

fn to_plan(p: &ScalePlanConfig) -> ScalePlan {
    ScalePlan {
        seed: p.seed.unwrap_or_default(),
        mode: p.mode,
        range: p.range,
    }
}

/// A validated config with every default and seed filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub base: PathBuf,
    pub output_dir: PathBuf,
}

impl Resolved {
    fn path(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn model(&self) -> Result<ModelSpec, CliError> {
        let c = &self.config;
        let arch = match by_name(&c.model_name) {
            Some(m) => m,
            None => {
                let path = self.path(Path::new(&c.model_name));
                let text = std::fs::read_to_string(&path).map_err(|e| config_err("modelName", e))?;
                ModelSpec::from_json(&text).map_err(|e| config_err("modelName", e))?
            }
        };
        let model = match &c.weights {
            WeightsSource::Seed(s) => seed_weights(&arch, s.expect("filled by resolve")),
            WeightsSource::Path(p) => load_weights(&arch, self.path(p)).map_err(CliError::data)?,
        };
        match c.numeric_mode {
            Some(d) => model.cast(d).map_err(|e| config_err("numericMode", e)),
            None => Ok(model),
        }
    }

    /// `(validation, stream)` per the split plan.
    pub fn datasets(&self, model: &ModelSpec) -> Result<(Dataset, Dataset), CliError> {
        let (all, split_cfg) = match &self.config.dataset {
            DatasetConfig::Mnist { images, labels, split } => {
                (parse_idx(self.path(images), self.path(labels)).map_err(CliError::data)?, split)
            }
            DatasetConfig::Cifar10 { files, split } => {
                let mut items: Vec<Item> = Vec::new();
                let mut first = None;
                for f in files {
                    let ds = parse_cifar10(self.path(f)).map_err(CliError::data)?;
                    first.get_or_insert((ds.source, ds.num_classes));
                    items.extend(ds.items);
                }
                let (source, classes) = first.expect("validated non-empty");
                (Dataset::new("cifar10", items, source, classes).map_err(CliError::data)?, split)
            }
            DatasetConfig::Synthetic { seed, count, split } => (
                synthesize(
                    count.expect("filled by resolve"),
                    &model.input_shape,
                    seed.expect("filled by resolve"),
                    SynthMode::Uniform,
                )
                .map_err(CliError::data)?,
                split,
            ),
        };
        if all.image_shape().is_some_and(|s| s != model.input_shape.as_slice()) {
            return Err(CliError::new(
                ExitCode::Data,
                format!(
                    "dataset images have shape {:?}, model {:?} expects {:?}",
                    all.image_shape().unwrap_or_default(),
                    model.name,
                    model.input_shape
                ),
            ));
        }
        let plan = SplitPlan {
            validation_count: split_cfg.validation_count,
            stream_count: split_cfg.stream_count,
            seed: split_cfg.seed.expect("filled by resolve"),
        };
        split(&all, &plan).map_err(CliError::data)
    }

    pub fn malicious_images(&self, model: &ModelSpec) -> Result<Vec<Tensor>, CliError> {
        match &self.config.trojan.malicious_images {
            MaliciousSource::Path(p) => {
                let path = self.path(p);
                let bytes = std::fs::read(&path).map_err(|e| CliError::new(ExitCode::Data, format!("{}: {e}", path.display())))?;
                decode_images(&bytes).map_err(CliError::data)
            }
            MaliciousSource::Noise { count, seed } => {
                noise_images(&model.input_shape, *count, seed.expect("filled by resolve")).map_err(CliError::data)
            }
        }
    }

    pub fn monte_carlo(&self) -> MonteCarlo {
        MonteCarlo {
            samples: self.config.monte_carlo.samples,
            seed: self.config.monte_carlo.seed.expect("filled by resolve"),
        }
    }

    pub fn scale_plan(&self) -> Option<ScalePlan> {
        match &self.config.defense {
            Some(DefenseConfig::Altered(p)) => Some(to_plan(p)),
            _ => None,
        }
    }
}
