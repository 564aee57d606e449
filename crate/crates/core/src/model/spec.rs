use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{conv_extent, Kernel, Padding};
use crate::tensor::{cast, DType};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConvParams {
    pub out_channels: usize,
    /// `[k_h, k_w]`
    pub kernel: [usize; 2],
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: Padding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PoolParams {
    pub window: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DenseParams {
    pub units: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "hyperparams", rename_all = "lowercase")]
pub enum LayerKind {
    Conv(ConvParams),
    Maxpool(PoolParams),
    Relu,
    Flatten,
    Dense(DenseParams),
}

impl LayerKind {
    pub fn label(&self) -> &'static str {
        match self {
            LayerKind::Conv(_) => "conv",
            LayerKind::Maxpool(_) => "maxpool",
            LayerKind::Relu => "relu",
            LayerKind::Flatten => "flatten",
            LayerKind::Dense(_) => "dense",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerKind::Conv(_) | LayerKind::Dense(_))
    }

    /// Output shape for a given input shape, or `None` when incompatible.
    pub fn output_shape(&self, input: &[usize]) -> Option<Vec<usize>> {
        match (self, input) {
            (LayerKind::Conv(p), &[_, h, w]) => {
                let (oh, _) = conv_extent(h, p.kernel[0], p.stride, p.padding)?;
                let (ow, _) = conv_extent(w, p.kernel[1], p.stride, p.padding)?;
                (p.out_channels > 0).then(|| vec![p.out_channels, oh, ow])
            }
            (LayerKind::Maxpool(p), &[c, h, w]) => {
                let (oh, _) = conv_extent(h, p.window, p.stride, Padding::Valid)?;
                let (ow, _) = conv_extent(w, p.window, p.stride, Padding::Valid)?;
                Some(vec![c, oh, ow])
            }
            (LayerKind::Relu, s) => Some(s.to_vec()),
            (LayerKind::Flatten, s) => Some(vec![s.iter().product()]),
            (LayerKind::Dense(p), &[_]) => (p.units > 0).then(|| vec![p.units]),
            _ => None,
        }
    }

    /// `(weight shape, bias shape)` for parameterized layers.
    pub fn param_shapes(&self, input: &[usize]) -> Option<(Vec<usize>, Vec<usize>)> {
        match (self, input) {
            (LayerKind::Conv(p), &[c, _, _]) => Some((
                vec![p.out_channels, c, p.kernel[0], p.kernel[1]],
                vec![p.out_channels],
            )),
            (LayerKind::Dense(p), &[n]) => Some((vec![p.units, n], vec![p.units])),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Kernel>,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        LayerSpec {
            name: name.into(),
            kind,
            params: None,
        }
    }

    pub fn conv(name: &str, out_channels: usize, k: usize) -> Self {
        Self::new(
            name,
            LayerKind::Conv(ConvParams {
                out_channels,
                kernel: [k, k],
                stride: 1,
                padding: Padding::Valid,
            }),
        )
    }

    pub fn maxpool(name: &str, window: usize) -> Self {
        Self::new(
            name,
            LayerKind::Maxpool(PoolParams {
                window,
                stride: window,
            }),
        )
    }

    pub fn relu(name: &str) -> Self {
        Self::new(name, LayerKind::Relu)
    }

    pub fn flatten(name: &str) -> Self {
        Self::new(name, LayerKind::Flatten)
    }

    pub fn dense(name: &str, units: usize) -> Self {
        Self::new(name, LayerKind::Dense(DenseParams { units }))
    }
}

/// Check that `layers` chain from `input_shape`, returning every layer's
/// output shape. Parameters, when present, must match the derived shapes.
pub fn propagate_shapes(input_shape: &[usize], layers: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    let mut shape = input_shape.to_vec();
    let mut out = Vec::with_capacity(layers.len());
    for layer in layers {
        let next = layer.kind.output_shape(&shape).ok_or_else(|| {
            Error::Config(format!(
                "layer {:?} ({}) cannot accept input of shape {shape:?}",
                layer.name,
                layer.kind.label()
            ))
        })?;
        match (&layer.params, layer.kind.param_shapes(&shape)) {
            (Some(k), Some((ws, bs))) => {
                if k.tensor.shape() != ws.as_slice() || k.bias.shape() != bs.as_slice() {
                    return Err(Error::Dimension {
                        op: "layer params",
                        lhs: k.tensor.shape().to_vec(),
                        rhs: ws,
                    });
                }
            }
            (Some(_), None) => {
                return Err(Error::Config(format!(
                    "layer {:?} ({}) takes no parameters",
                    layer.name,
                    layer.kind.label()
                )))
            }
            _ => {}
        }
        out.push(next.clone());
        shape = next;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelSpec {
    pub name: String,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        let model = ModelSpec {
            name: name.into(),
            input_shape,
            layers,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::Config(format!(
                "model {:?} has invalid input shape {:?}",
                self.name, self.input_shape
            )));
        }
        let mut seen = HashSet::new();
        for layer in &self.layers {
            if layer.name.is_empty() {
                return Err(Error::Config("layer names must be non-empty".into()));
            }
            if !seen.insert(layer.name.as_str()) {
                return Err(Error::Config(format!("duplicate layer name {:?}", layer.name)));
            }
        }
        if !self.layers.iter().any(|l| matches!(l.kind, LayerKind::Dense(_))) {
            return Err(Error::Config(format!(
                "model {:?} needs at least one dense layer",
                self.name
            )));
        }
        propagate_shapes(&self.input_shape, &self.layers)?;
        let dtypes: HashSet<DType> = self
            .layers
            .iter()
            .filter_map(|l| l.params.as_ref())
            .map(|k| k.tensor.dtype())
            .collect();
        if dtypes.len() > 1 {
            return Err(Error::Config(format!(
                "model {:?} mixes parameter dtypes {dtypes:?}",
                self.name
            )));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let model: ModelSpec = serde_json::from_str(json)?;
        model.validate()?;
        Ok(model)
    }

    /// Output shape of every layer, in order.
    pub fn layer_shapes(&self) -> Vec<Vec<usize>> {
        propagate_shapes(&self.input_shape, &self.layers).expect("validated at construction")
    }

    /// Input shape seen by layer `index`.
    pub fn layer_input_shape(&self, index: usize) -> Vec<usize> {
        if index == 0 {
            self.input_shape.clone()
        } else {
            self.layer_shapes().swap_remove(index - 1)
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.layer_shapes().pop().unwrap_or_else(|| self.input_shape.clone())
    }

    pub fn layer_names(&self) -> Vec<String> {
        self.layers.iter().map(|l| l.name.clone()).collect()
    }

    pub fn layer_index(&self, name: &str) -> Result<usize> {
        self.layers
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| Error::UnknownLayer {
                name: name.to_string(),
                valid: self.layer_names(),
            })
    }

    /// Number of scalars in the named layer's output.
    pub fn layer_len(&self, name: &str) -> Result<usize> {
        let index = self.layer_index(name)?;
        Ok(self.layer_shapes()[index].iter().product())
    }

    pub fn is_complete(&self) -> bool {
        self.layers
            .iter()
            .all(|l| !l.kind.has_params() || l.params.is_some())
    }

    /// Dtype shared by all parameters (`float32` when none are loaded).
    pub fn dtype(&self) -> DType {
        self.layers
            .iter()
            .find_map(|l| l.params.as_ref())
            .map(|k| k.tensor.dtype())
            .unwrap_or(DType::Float32)
    }

    /// Copy with every parameter cast to `dtype`.
    pub fn cast(&self, dtype: DType) -> Result<ModelSpec> {
        let mut out = self.clone();
        for layer in &mut out.layers {
            if let Some(k) = &layer.params {
                layer.params = Some(Kernel::new(cast(&k.tensor, dtype)?, cast(&k.bias, dtype)?)?);
            }
        }
        Ok(out)
    }

    /// Architecture only, every `params` cleared.
    pub fn architecture(&self) -> ModelSpec {
        let mut out = self.clone();
        for layer in &mut out.layers {
            layer.params = None;
        }
        out
    }

    /// Total parameter payload in bytes (four bytes per scalar).
    pub fn parameter_bytes(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.params.as_ref())
            .map(Kernel::byte_len)
            .sum()
    }
}
