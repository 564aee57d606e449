use indexmap::IndexMap;

use super::spec::{LayerKind, LayerSpec, ModelSpec};
use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::{cast, DType, Tensor};

/// Every layer's output for one inference, keyed by layer name.
///
/// Dense taps are the raw affine output; activations live in their own
/// `relu` layers.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub final_label: usize,
    pub taps: IndexMap<String, Tensor>,
}

impl ForwardTrace {
    pub fn tap(&self, layer: &str) -> Option<&Tensor> {
        self.taps.get(layer)
    }

    pub fn output(&self) -> &Tensor {
        self.taps.last().map(|(_, t)| t).expect("models have at least one layer")
    }

    /// Saturations summed over all taps.
    pub fn saturated(&self) -> u64 {
        self.taps.values().map(Tensor::saturated).sum()
    }

    pub fn bitwise_eq(&self, other: &ForwardTrace) -> bool {
        self.final_label == other.final_label
            && self.taps.len() == other.taps.len()
            && self
                .taps
                .iter()
                .zip(&other.taps)
                .all(|((na, ta), (nb, tb))| na == nb && ta.bitwise_eq(tb))
    }
}

pub fn apply_layer(layer: &LayerSpec, input: &Tensor) -> Result<Tensor> {
    let params = || {
        layer.params.as_ref().ok_or_else(|| {
            Error::Config(format!("layer {:?} has no parameters loaded", layer.name))
        })
    };
    match &layer.kind {
        LayerKind::Conv(p) => ops::conv2d(input, params()?, p.stride, p.padding),
        LayerKind::Maxpool(p) => ops::maxpool2d(input, p.window, p.stride),
        LayerKind::Relu => Ok(ops::relu(input)),
        LayerKind::Flatten => Ok(ops::flatten(input)),
        LayerKind::Dense(_) => ops::dense(input, params()?),
    }
}

/// Run a contiguous layer slice, returning each layer's output in order.
pub fn run_layers(layers: &[LayerSpec], input: &Tensor) -> Result<Vec<Tensor>> {
    let mut outputs: Vec<Tensor> = Vec::with_capacity(layers.len());
    for layer in layers {
        let next = apply_layer(layer, outputs.last().unwrap_or(input))?;
        outputs.push(next);
    }
    Ok(outputs)
}

/// Cast `image` to the model's parameter dtype after checking its shape.
pub fn prepare_input(model: &ModelSpec, image: &Tensor) -> Result<Tensor> {
    if image.shape() != model.input_shape.as_slice() {
        return Err(Error::Dimension {
            op: "forward",
            lhs: image.shape().to_vec(),
            rhs: model.input_shape.clone(),
        });
    }
    match model.dtype() {
        d if d == image.dtype() => Ok(image.clone()),
        DType::Float32 => Ok(cast(image, DType::Float32)?),
        d => cast(image, d),
    }
}

pub fn forward(model: &ModelSpec, image: &Tensor) -> Result<ForwardTrace> {
    if !model.is_complete() {
        let missing: Vec<_> = model
            .layers
            .iter()
            .filter(|l| l.kind.has_params() && l.params.is_none())
            .map(|l| l.name.as_str())
            .collect();
        return Err(Error::Config(format!(
            "model {:?} is missing parameters for {missing:?}",
            model.name
        )));
    }
    let input = prepare_input(model, image)?;
    let outputs = run_layers(&model.layers, &input)?;
    let final_label = ops::argmax(outputs.last().expect("validated model has layers"))?;
    let taps = model
        .layers
        .iter()
        .map(|l| l.name.clone())
        .zip(outputs)
        .collect();
    Ok(ForwardTrace { final_label, taps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_lenet, seed_weights};
    use crate::tensor::{DType, QFormat};

    fn zero_model() -> ModelSpec {
        let m = build_lenet();
        let seeded = seed_weights(&m, 1);
        let mut zeroed = seeded.clone();
        for layer in &mut zeroed.layers {
            if let Some(k) = &mut layer.params {
                k.tensor = Tensor::zeros(k.tensor.shape().to_vec(), DType::Float32).unwrap();
                k.bias = Tensor::zeros(k.bias.shape().to_vec(), DType::Float32).unwrap();
            }
        }
        zeroed
    }

    #[test]
    fn zeros_propagate() {
        let model = zero_model();
        let img = Tensor::zeros(vec![1, 28, 28], DType::Float32).unwrap();
        let trace = forward(&model, &img).unwrap();
        assert_eq!(trace.final_label, 0);
        assert_eq!(trace.taps.len(), model.layers.len());
        for t in trace.taps.values() {
            assert!(t.values().all(|v| v == 0.0));
        }
    }

    #[test]
    fn runtime_tap_shapes_match_declared() {
        let model = seed_weights(&build_lenet(), 3);
        let img = Tensor::from_f32(vec![1, 28, 28], (0..784).map(|i| (i % 17) as f32 / 17.0).collect())
            .unwrap();
        let trace = forward(&model, &img).unwrap();
        for (shape, (_, tap)) in model.layer_shapes().iter().zip(&trace.taps) {
            assert_eq!(shape.as_slice(), tap.shape());
        }
        assert_eq!(trace.final_label, ops::argmax(trace.output()).unwrap());
    }

    #[test]
    fn missing_params_is_config_error() {
        let img = Tensor::zeros(vec![1, 28, 28], DType::Float32).unwrap();
        assert!(matches!(forward(&build_lenet(), &img), Err(Error::Config(_))));
    }

    #[test]
    fn wrong_input_shape_is_dimension_error() {
        let model = seed_weights(&build_lenet(), 3);
        let img = Tensor::zeros(vec![1, 28, 27], DType::Float32).unwrap();
        assert!(matches!(forward(&model, &img), Err(Error::Dimension { .. })));
    }

    #[test]
    fn fixed_point_mode_runs_and_tracks_float() {
        let model = seed_weights(&build_lenet(), 9);
        let fixed = model.cast(DType::FixedQ(QFormat::Q16_16)).unwrap();
        let img = Tensor::from_f32(vec![1, 28, 28], (0..784).map(|i| (i % 5) as f32 / 4.0).collect())
            .unwrap();
        let a = forward(&model, &img).unwrap();
        let b = forward(&fixed, &img).unwrap();
        assert_eq!(b.tap("fc1").unwrap().dtype(), DType::FixedQ(QFormat::Q16_16));
        for (x, y) in a.tap("fc1").unwrap().values().zip(b.tap("fc1").unwrap().values()) {
            assert!((x - y).abs() < 1e-2, "{x} vs {y}");
        }
    }
}
