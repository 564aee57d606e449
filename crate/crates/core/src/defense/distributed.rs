use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::{DefenseKind, DefenseReport, Verdict};
use crate::error::{Error, Result};
use crate::model::{encode_tensors, run_layers, LayerSpec, ModelSpec, TensorSet};
use crate::model::{bias_name, weight_name};
use crate::ops::argmax;
use crate::tensor::Tensor;

/// Where to split the layer pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PartitionSpec {
    /// `k` contiguous groups of near-equal size, larger groups first.
    Groups(usize),
    /// Start a new group at each named layer.
    CutBefore(Vec<String>),
}

/// Everything one contracted designer receives.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignerView {
    pub group_index: usize,
    pub layers: Vec<LayerSpec>,
    pub input_dims: Vec<usize>,
    pub output_dims: Vec<usize>,
}

/// Serialized architecture of one view; parameters travel in a DLAW slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViewFragment {
    pub group_index: usize,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl DesignerView {
    pub fn layer_names(&self) -> Vec<&str> {
        self.layers.iter().map(|l| l.name.as_str()).collect()
    }

    pub fn fragment(&self) -> ViewFragment {
        ViewFragment {
            group_index: self.group_index,
            input_shape: self.input_dims.clone(),
            output_shape: self.output_dims.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerSpec {
                    params: None,
                    ..l.clone()
                })
                .collect(),
        }
    }

    pub fn tensors(&self) -> TensorSet {
        let mut set = TensorSet::new();
        for layer in &self.layers {
            if let Some(k) = &layer.params {
                set.insert(weight_name(&layer.name), k.tensor.clone());
                set.insert(bias_name(&layer.name), k.bias.clone());
            }
        }
        set
    }

    pub fn parameter_bytes(&self) -> usize {
        self.layers.iter().filter_map(|l| l.params.as_ref()).map(|k| k.byte_len()).sum()
    }

    /// Write `group<i>.json` and `group<i>.dlaw` under `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let json = dir.join(format!("group{}.json", self.group_index));
        let text = serde_json::to_string_pretty(&self.fragment())?;
        std::fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
        let blob = dir.join(format!("group{}.dlaw", self.group_index));
        std::fs::write(&blob, encode_tensors(&self.tensors())?).map_err(|e| Error::io(&blob, e))
    }

    /// Run this group's layers on a boundary tensor.
    pub fn run(&self, input: &Tensor) -> Result<Tensor> {
        if input.shape() != self.input_dims.as_slice() {
            return Err(Error::Dimension {
                op: "designer view",
                lhs: input.shape().to_vec(),
                rhs: self.input_dims.clone(),
            });
        }
        Ok(run_layers(&self.layers, input)?.pop().unwrap_or_else(|| input.clone()))
    }
}

/// Group boundaries as half-open layer ranges.
fn ranges(model: &ModelSpec, spec: &PartitionSpec) -> Result<Vec<(usize, usize)>> {
    let n = model.layers.len();
    let starts: Vec<usize> = match spec {
        PartitionSpec::Groups(k) => {
            let k = *k;
            if k < 2 || k > n {
                return Err(Error::Config(format!("group count must be in 2..={n}, got {k}")));
            }
            let (base, extra) = (n / k, n % k);
            (0..k).map(|g| g * base + g.min(extra)).collect()
        }
        PartitionSpec::CutBefore(names) => {
            if names.is_empty() {
                return Err(Error::Config("cutBefore needs at least one layer name".into()));
            }
            let mut starts = vec![0];
            for name in names {
                let i = model.layer_index(name)?;
                if i <= *starts.last().expect("non-empty") {
                    return Err(Error::Config(format!(
                        "cut before {name:?} must name a later layer than the previous cut and not the first layer"
                    )));
                }
                starts.push(i);
            }
            starts
        }
    };
    Ok(starts
        .iter()
        .zip(starts.iter().skip(1).chain(std::iter::once(&n)))
        .map(|(&a, &b)| (a, b))
        .collect())
}

/// Split `model` into contiguous designer views.
pub fn partition(model: &ModelSpec, spec: &PartitionSpec) -> Result<Vec<DesignerView>> {
    let shapes = model.layer_shapes();
    Ok(ranges(model, spec)?
        .into_iter()
        .enumerate()
        .map(|(g, (a, b))| DesignerView {
            group_index: g,
            layers: model.layers[a..b].to_vec(),
            input_dims: model.layer_input_shape(a),
            output_dims: shapes[b - 1].clone(),
        })
        .collect())
}

/// Chain the views on an already prepared input; returns the final output
/// and its label.
pub fn chain_forward(views: &[DesignerView], input: &Tensor) -> Result<(Tensor, usize)> {
    let mut x = input.clone();
    for v in views {
        x = v.run(&x)?;
    }
    let label = argmax(&x)?;
    Ok((x, label))
}

fn check_consistent(views: &[DesignerView], model: &ModelSpec) -> Result<()> {
    let bad = |m: String| Err(Error::Config(format!("inconsistent designer views: {m}")));
    if views.len() < 2 {
        return bad(format!("{} group(s); the defense needs at least 2", views.len()));
    }
    let shapes = model.layer_shapes();
    let mut next = 0;
    for (g, v) in views.iter().enumerate() {
        if v.group_index != g {
            return bad(format!("view at position {g} has group index {}", v.group_index));
        }
        if v.layers.is_empty() {
            return bad(format!("group {g} is empty"));
        }
        let end = next + v.layers.len();
        if end > model.layers.len() || v.layers[..] != model.layers[next..end] {
            return bad(format!("group {g} is not the model's layer slice starting at {next}"));
        }
        if v.input_dims != model.layer_input_shape(next) || v.output_dims != shapes[end - 1] {
            return bad(format!("group {g} boundary dims disagree with the model"));
        }
        next = end;
    }
    if next != model.layers.len() {
        return bad(format!("views cover {next} of {} layers", model.layers.len()));
    }
    let total: usize = views.iter().map(DesignerView::parameter_bytes).sum();
    if total != model.parameter_bytes() {
        return bad(format!("views hold {total} parameter bytes, model has {}", model.parameter_bytes()));
    }
    Ok(())
}

/// Check what each designer can and cannot learn from its view.
///
/// (i) the view lacks parameters held by another group; (ii) a non-final
/// view cannot produce class labels; (iii) no view sees both the model's
/// input dims and its final output dims. Effective when (i) and (ii) hold for
/// every non-final view and (i) holds for the final one.
pub fn evaluate_distributed_defense(views: &[DesignerView], model: &ModelSpec) -> Result<DefenseReport> {
    check_consistent(views, model)?;
    let last = views.len() - 1;
    let model_out = model.output_shape();
    let mut findings = Vec::new();
    let mut effective = true;
    for v in views {
        let g = v.group_index;
        let own: BTreeSet<&str> = v.layers.iter().filter(|l| l.params.is_some()).map(|l| l.name.as_str()).collect();
        let missing: BTreeSet<usize> = views
            .iter()
            .filter(|o| o.group_index != g && o.layers.iter().any(|l| l.params.is_some() && !own.contains(l.name.as_str())))
            .map(|o| o.group_index)
            .collect();
        let lacks = !missing.is_empty();
        findings.push(if lacks {
            format!("group {g}: lacks parameters of groups {missing:?}")
        } else {
            format!("group {g}: VIOLATION holds every other group's parameters")
        });
        let mut ok = lacks;
        if g != last {
            let no_labels = v.layers.last().map(|l| &l.name) != model.layers.last().map(|l| &l.name);
            findings.push(if no_labels {
                format!("group {g}: output {:?} is not mapped to class labels", v.output_dims)
            } else {
                format!("group {g}: VIOLATION output reaches class labels")
            });
            ok &= no_labels;
        }
        let sees_both = g == 0 && g == last && v.input_dims == model.input_shape && v.output_dims == model_out;
        findings.push(if sees_both {
            format!("group {g}: VIOLATION sees both model input and final output dims")
        } else {
            format!("group {g}: does not see both model input and final output dims")
        });
        effective &= ok && !sees_both;
    }
    let mut report = DefenseReport::empty(
        DefenseKind::Distributed,
        if effective { Verdict::Effective } else { Verdict::Ineffective },
    );
    report.exposure_findings = findings;
    Ok(report)
}
