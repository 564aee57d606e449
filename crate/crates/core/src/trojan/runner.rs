use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{forward, ForwardTrace, ModelSpec};

use super::machine::{EffectiveInput, EventKind, StepOutcome, TriggerEvent, TrojanConfig, TrojanState};

/// Pipeline output for one image cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleLabel {
    pub cycle: u64,
    pub label: usize,
    pub substituted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttackReport {
    pub images_processed: u64,
    pub trigger_count: u64,
    pub trigger_rate: f64,
    pub substitutions: u64,
    pub misclassifications: u64,
    /// Labels agree with the clean run on every non-substituted cycle.
    pub clean_equivalence: bool,
}

#[derive(Debug, Clone)]
pub struct CompromisedRun {
    pub labels: Vec<CycleLabel>,
    pub clean_labels: Vec<usize>,
    pub report: AttackReport,
    pub state: TrojanState,
}

/// Clean pipeline labels, computed in parallel.
pub fn clean_labels(model: &ModelSpec, stream: &Dataset) -> Result<Vec<usize>> {
    stream
        .items
        .par_iter()
        .map(|it| forward(model, &it.image).map(|t| t.final_label))
        .collect()
}

pub fn run_compromised(model: &ModelSpec, config: &TrojanConfig, stream: &Dataset) -> Result<CompromisedRun> {
    run_compromised_observed(model, config, stream, |_, _| {})
}

/// Like [`run_compromised`], handing each cycle's outcome to `observe`.
///
/// The stream is processed strictly in order since cycle `t` can arm the
/// substitution at `t + 1`.
pub fn run_compromised_observed(
    model: &ModelSpec,
    config: &TrojanConfig,
    stream: &Dataset,
    mut observe: impl FnMut(u64, &StepOutcome),
) -> Result<CompromisedRun> {
    config.validate(model)?;
    let mut clean = None;
    let compromised = rayon::in_place_scope(|scope| -> Result<_> {
        scope.spawn(|_| clean = Some(clean_labels(model, stream)));
        let mut state = TrojanState::new();
        let mut labels = Vec::with_capacity(stream.len());
        for (cycle, item) in (0u64..).zip(&stream.items) {
            let outcome = state.step(model, config, cycle, &item.image)?;
            labels.push(CycleLabel {
                cycle,
                label: outcome.trace.final_label,
                substituted: matches!(outcome.input, EffectiveInput::Malicious(_)),
            });
            observe(cycle, &outcome);
        }
        Ok((labels, state))
    });
    let clean = clean.expect("scope joins the clean run")?;
    let (labels, state) = compromised?;
    let report = evaluate_attack(&clean, &labels, &state.log)?;
    Ok(CompromisedRun {
        labels,
        clean_labels: clean,
        report,
        state,
    })
}

pub fn evaluate_attack(clean_labels: &[usize], labels: &[CycleLabel], log: &[TriggerEvent]) -> Result<AttackReport> {
    if clean_labels.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "clean labels vs compromised labels",
            left: clean_labels.len(),
            right: labels.len(),
        });
    }
    let trigger_count = log.iter().filter(|e| e.kind == EventKind::Triggered).count() as u64;
    let mut substitutions = 0u64;
    let mut misclassifications = 0u64;
    let mut clean_equivalence = true;
    for (c, l) in clean_labels.iter().zip(labels) {
        if l.substituted {
            substitutions += 1;
            misclassifications += (l.label != *c) as u64;
        } else if l.label != *c {
            clean_equivalence = false;
        }
    }
    let images_processed = labels.len() as u64;
    Ok(AttackReport {
        images_processed,
        trigger_count,
        trigger_rate: if images_processed == 0 {
            0.0
        } else {
            trigger_count as f64 / images_processed as f64
        },
        substitutions,
        misclassifications,
        clean_equivalence,
    })
}

/// `cycle,label,substituted` rows, LF-terminated.
pub fn write_labels_csv(labels: &[CycleLabel], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for l in labels {
        w.serialize(l)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn export_labels(labels: &[CycleLabel], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_labels_csv(labels, std::io::BufWriter::new(file))
}

pub fn read_labels_csv(path: impl AsRef<Path>) -> Result<Vec<CycleLabel>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<CycleLabel>, _>>()?)
}

/// Labels for a clean pipeline in the same CSV shape.
pub fn clean_cycle_labels(clean: &[usize]) -> Vec<CycleLabel> {
    (0u64..)
        .zip(clean)
        .map(|(cycle, &label)| CycleLabel {
            cycle,
            label,
            substituted: false,
        })
        .collect()
}

/// Traces of a clean run, for tap-level comparison against a compromised run.
pub fn clean_traces(model: &ModelSpec, stream: &Dataset) -> Result<Vec<ForwardTrace>> {
    stream.items.par_iter().map(|it| forward(model, &it.image)).collect()
}
