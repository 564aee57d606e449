use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward, ForwardTrace, ModelSpec};
use crate::profiler::SigmaBand;
use crate::tensor::Tensor;

use super::trigger::check_trigger;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Selection {
    /// Cycle through stored images in order, one per substitution.
    RoundRobin,
    FixedIndex(usize),
}

/// What the Trojan watches and what it injects.
#[derive(Debug, Clone, PartialEq)]
pub struct TrojanConfig {
    pub watch_layer: String,
    pub bands: Vec<SigmaBand>,
    pub malicious_images: Vec<Tensor>,
    pub selection: Selection,
}

impl TrojanConfig {
    pub fn new(
        model: &ModelSpec,
        watch_layer: impl Into<String>,
        bands: Vec<SigmaBand>,
        malicious_images: Vec<Tensor>,
        selection: Selection,
    ) -> Result<Self> {
        let config = TrojanConfig {
            watch_layer: watch_layer.into(),
            bands,
            malicious_images,
            selection,
        };
        config.validate(model)?;
        Ok(config)
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        model.layer_index(&self.watch_layer)?;
        if self.malicious_images.is_empty() {
            return Err(Error::Config("trojan needs at least one malicious image".into()));
        }
        if let Some((i, img)) = self
            .malicious_images
            .iter()
            .enumerate()
            .find(|(_, img)| img.shape() != model.input_shape.as_slice())
        {
            return Err(Error::Config(format!(
                "malicious image {i} has shape {:?}, model input is {:?}",
                img.shape(),
                model.input_shape
            )));
        }
        for band in &self.bands {
            band.validate()?;
            if band.layer_name != self.watch_layer {
                return Err(Error::Config(format!(
                    "band on {:?} does not reference watched layer {:?}",
                    band.layer_name, self.watch_layer
                )));
            }
        }
        if let Selection::FixedIndex(i) = self.selection {
            if i >= self.malicious_images.len() {
                return Err(Error::Config(format!(
                    "fixedIndex {i} out of range for {} malicious images",
                    self.malicious_images.len()
                )));
            }
        }
        Ok(())
    }

    /// Stored image used for the `nth` substitution (0-based).
    pub fn malicious_index(&self, nth: usize) -> usize {
        match self.selection {
            Selection::RoundRobin => nth % self.malicious_images.len(),
            Selection::FixedIndex(i) => i,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    #[default]
    Dormant,
    Armed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Triggered,
    Substituted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TriggerEvent {
    pub cycle: u64,
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hit_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hit_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub used_malicious_index: Option<usize>,
}

/// Trojan state carried from one image cycle to the next.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrojanState {
    pub mode: Mode,
    /// Number of substitutions performed.
    pub fired_count: usize,
    pub log: Vec<TriggerEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectiveInput {
    Legitimate,
    Malicious(usize),
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub input: EffectiveInput,
    pub trace: ForwardTrace,
    /// Events logged during this cycle.
    pub events: Vec<TriggerEvent>,
}

impl TrojanState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Process one image cycle.
    ///
    /// Dormant: the legitimate input passes through and the watched tap is
    /// checked; a hit arms the Trojan. Armed: the legitimate input is dropped,
    /// the selected stored image is inferred instead, trigger checking is
    /// skipped, and the Trojan returns to Dormant.
    pub fn step(
        &mut self,
        model: &ModelSpec,
        config: &TrojanConfig,
        cycle: u64,
        legitimate: &Tensor,
    ) -> Result<StepOutcome> {
        if legitimate.shape() != model.input_shape.as_slice() {
            return Err(Error::Dimension {
                op: "trojan step",
                lhs: legitimate.shape().to_vec(),
                rhs: model.input_shape.clone(),
            });
        }
        let mut events = Vec::new();
        let (input, trace) = match self.mode {
            Mode::Dormant => {
                let trace = forward(model, legitimate)?;
                let tap = trace
                    .tap(&config.watch_layer)
                    .ok_or_else(|| Error::UnknownLayer {
                        name: config.watch_layer.clone(),
                        valid: model.layer_names(),
                    })?;
                if let Some((index, value)) = check_trigger(tap, &config.bands) {
                    self.mode = Mode::Armed;
                    events.push(TriggerEvent {
                        cycle,
                        kind: EventKind::Triggered,
                        hit_value: Some(value),
                        hit_index: Some(index),
                        used_malicious_index: None,
                    });
                }
                (EffectiveInput::Legitimate, trace)
            }
            Mode::Armed => {
                let which = config.malicious_index(self.fired_count);
                let trace = forward(model, &config.malicious_images[which])?;
                self.mode = Mode::Dormant;
                self.fired_count += 1;
                events.push(TriggerEvent {
                    cycle,
                    kind: EventKind::Substituted,
                    hit_value: None,
                    hit_index: None,
                    used_malicious_index: Some(which),
                });
                (EffectiveInput::Malicious(which), trace)
            }
        };
        self.log.extend(events.iter().cloned());
        Ok(StepOutcome { input, trace, events })
    }
}
