use std::path::PathBuf;

use dla_intercept::data::Dataset;
use dla_intercept::defense::{
    alter_validation, evaluate_altered_defense, evaluate_distributed_defense, partition, AdversaryParams,
    DefenseReport, ScaleMode, ScalePlan, Verdict,
};
use dla_intercept::model::ModelSpec;
use dla_intercept::profiler::{
    estimate_trigger_rate, forge_from_profile, profile_layer, write_histogram_csv, ActivationModel, LayerProfile,
    LayerStats, SigmaBand, TriggerRateEstimate,
};
use dla_intercept::trojan::{
    clean_cycle_labels, measure_trigger_rate, run_compromised, write_labels_csv, AttackReport, RateMeasurement,
    TriggerEvent, TrojanConfig,
};
use serde::Serialize;

use crate::config::{DefenseConfig, ExperimentConfig, Resolved};
use crate::exit::{CliError, ExitCode};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Envelope<'a, T> {
    format_version: u32,
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    body: T,
}

/// Collects output files for one command.
pub struct Output<'a> {
    resolved: &'a Resolved,
    pub written: Vec<PathBuf>,
}

impl<'a> Output<'a> {
    fn new(resolved: &'a Resolved) -> Result<Self, CliError> {
        let dir = &resolved.output_dir;
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::new(ExitCode::Data, format!("{}: {e}", dir.display())))?;
        Ok(Output {
            resolved,
            written: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.resolved.output_dir.join(name)
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::new(ExitCode::Data, format!("{}: {e}", dir.display())))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::new(ExitCode::Data, format!("{}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, body: T) -> Result<(), CliError> {
        let env = Envelope {
            format_version: FORMAT_VERSION,
            config: &self.resolved.config,
            body,
        };
        let mut text = serde_json::to_string_pretty(&env).map_err(|e| CliError::new(ExitCode::Internal, e.to_string()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }
}

/// Model and split datasets, loaded once per command.
pub struct Context {
    pub model: ModelSpec,
    pub validation: Dataset,
    pub stream: Dataset,
}

impl Context {
    pub fn load(r: &Resolved) -> Result<Self, CliError> {
        let model = r.model()?;
        let (validation, stream) = r.datasets(&model)?;
        model.layer_index(&r.config.watch_layer)?;
        Ok(Context {
            model,
            validation,
            stream,
        })
    }
}

fn profile_of(r: &Resolved, ctx: &Context) -> Result<LayerProfile, CliError> {
    Ok(profile_layer(&ctx.model, &ctx.validation, &r.config.watch_layer)?)
}

#[derive(Serialize)]
struct ProfileOut<'a> {
    stats: &'a LayerStats,
}

pub fn profile(r: &Resolved, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Output::new(r)?;
    let p = profile_of(r, ctx)?;
    out.json("profile.json", ProfileOut { stats: &p.stats })?;
    let mut csv = Vec::new();
    write_histogram_csv(&p.stats, &mut csv)?;
    out.write_bytes("histogram.csv", &csv)?;
    Ok(out.written)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct BandsOut<'a> {
    bands: &'a [SigmaBand],
}

/// Estimates under the pooled i.i.d. model and the per-element model.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Estimates {
    pub layer_length: usize,
    pub pooled: TriggerRateEstimate,
    pub per_element: TriggerRateEstimate,
}

fn forge_of(r: &Resolved, ctx: &Context) -> Result<(LayerProfile, Vec<SigmaBand>, Estimates), CliError> {
    let c = &r.config;
    let p = profile_of(r, ctx)?;
    let bands = forge_from_profile(&p, c.k_lo, c.k_hi, &c.sides)?;
    let layer_length = ctx.model.layer_len(&c.watch_layer)?;
    let mc = r.monte_carlo();
    let estimates = Estimates {
        layer_length,
        pooled: estimate_trigger_rate(&ActivationModel::pooled(&p.stats), &bands, layer_length, mc)?,
        per_element: estimate_trigger_rate(&ActivationModel::per_element(&p.elements), &bands, layer_length, mc)?,
    };
    Ok((p, bands, estimates))
}

pub fn forge(r: &Resolved, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Output::new(r)?;
    let (_, bands, estimates) = forge_of(r, ctx)?;
    out.json("bands.json", BandsOut { bands: &bands })?;
    out.json("estimate.json", &estimates)?;
    Ok(out.written)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct AttackOut<'a> {
    bands: &'a [SigmaBand],
    report: &'a AttackReport,
    /// Any-element hit rate of the bands on the clean stream.
    clean_trigger_rate: &'a RateMeasurement,
}

#[derive(Serialize)]
struct EventsOut<'a> {
    events: &'a [TriggerEvent],
}

fn attack_bands(r: &Resolved, ctx: &Context) -> Result<Vec<SigmaBand>, CliError> {
    match &r.config.trojan.bands {
        Some(b) => Ok(b.clone()),
        None => Ok(forge_of(r, ctx)?.1),
    }
}

pub fn attack(r: &Resolved, ctx: &Context) -> Result<(Vec<PathBuf>, AttackReport), CliError> {
    let mut out = Output::new(r)?;
    let c = &r.config;
    let bands = attack_bands(r, ctx)?;
    let trojan = TrojanConfig::new(
        &ctx.model,
        c.watch_layer.clone(),
        bands.clone(),
        r.malicious_images(&ctx.model)?,
        c.trojan.selection,
    )?;
    let run = run_compromised(&ctx.model, &trojan, &ctx.stream)?;
    let clean_rate = measure_trigger_rate(&ctx.model, &ctx.stream, &c.watch_layer, &bands)?;
    check_attack_invariants(&run.report, &run.state.log)?;
    out.json(
        "attack_report.json",
        AttackOut {
            bands: &bands,
            report: &run.report,
            clean_trigger_rate: &clean_rate,
        },
    )?;
    let mut csv = Vec::new();
    write_labels_csv(&run.labels, &mut csv)?;
    out.write_bytes("labels.csv", &csv)?;
    csv.clear();
    write_labels_csv(&clean_cycle_labels(&run.clean_labels), &mut csv)?;
    out.write_bytes("clean_labels.csv", &csv)?;
    out.json("events.json", EventsOut { events: &run.state.log })?;
    Ok((out.written, run.report))
}

fn check_attack_invariants(report: &AttackReport, log: &[TriggerEvent]) -> Result<(), CliError> {
    use dla_intercept::trojan::EventKind;
    let internal = |m: &str| Err(CliError::new(ExitCode::Internal, format!("invariant violated: {m}")));
    if report.substitutions > report.trigger_count {
        return internal("more substitutions than triggers");
    }
    for (i, e) in log.iter().enumerate() {
        if e.kind == EventKind::Substituted {
            let prev = i.checked_sub(1).map(|j| &log[j]);
            if !prev.is_some_and(|p| p.kind == EventKind::Triggered && p.cycle + 1 == e.cycle) {
                return internal("substitution without a trigger on the previous cycle");
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DefenseOut<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    scale_plan: Option<&'a ScalePlan>,
    /// Per-image factors; omitted for per-pixel plans.
    #[serde(skip_serializing_if = "Option::is_none")]
    image_scales: Option<Vec<f32>>,
    report: &'a DefenseReport,
}

pub fn defend(r: &Resolved, ctx: &Context) -> Result<(Vec<PathBuf>, DefenseReport), CliError> {
    let c = &r.config;
    let Some(defense) = &c.defense else {
        return Err(CliError::new(ExitCode::Config, "defense: section is required for defend"));
    };
    let mut out = Output::new(r)?;
    let report = match defense {
        DefenseConfig::Altered(_) => {
            let plan = r.scale_plan().expect("altered defense");
            let params = AdversaryParams {
                watch_layer: c.watch_layer.clone(),
                k_lo: c.k_lo,
                k_hi: c.k_hi,
                sides: c.sides.clone(),
                monte_carlo: r.monte_carlo(),
            };
            let report = evaluate_altered_defense(&ctx.model, &ctx.validation, &plan, &ctx.stream, &params)?;
            let image_scales = match plan.mode {
                ScaleMode::PerImage => Some(
                    alter_validation(&ctx.validation, &plan)?
                        .scales
                        .into_iter()
                        .flatten()
                        .collect(),
                ),
                ScaleMode::PerPixel => None,
            };
            out.json(
                "defense_report.json",
                DefenseOut {
                    scale_plan: Some(&plan),
                    image_scales,
                    report: &report,
                },
            )?;
            report
        }
        DefenseConfig::Partition(spec) => {
            let views = partition(&ctx.model, spec)?;
            let report = evaluate_distributed_defense(&views, &ctx.model)?;
            for v in &views {
                let text = serde_json::to_string_pretty(&v.fragment())
                    .map_err(|e| CliError::new(ExitCode::Internal, e.to_string()))?;
                out.write_bytes(&format!("views/group{}.json", v.group_index), (text + "\n").as_bytes())?;
                out.write_bytes(
                    &format!("views/group{}.dlaw", v.group_index),
                    &dla_intercept::model::encode_tensors(&v.tensors())?,
                )?;
            }
            out.json(
                "defense_report.json",
                DefenseOut {
                    scale_plan: None,
                    image_scales: None,
                    report: &report,
                },
            )?;
            report
        }
    };
    Ok((out.written, report))
}

/// Fail with the degeneracy exit code once the report is on disk.
pub fn inconclusive_exit(report: &DefenseReport) -> Result<(), CliError> {
    if report.verdict == Verdict::Inconclusive {
        return Err(CliError::new(
            ExitCode::Degenerate,
            format!(
                "defense verdict inconclusive: {}",
                report.detail.as_deref().unwrap_or("no detail")
            ),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SummaryOut<'a> {
    stats: &'a LayerStats,
    bands: &'a [SigmaBand],
    estimates: &'a Estimates,
    attack: &'a AttackReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    defense: Option<&'a DefenseReport>,
}

/// Every phase in order, then `summary.json`.
pub fn report(r: &Resolved, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let mut written = profile(r, ctx)?;
    written.extend(forge(r, ctx)?);
    let (files, attack_report) = attack(r, ctx)?;
    written.extend(files);
    let defense = match r.config.defense {
        Some(_) => {
            let (files, rep) = defend(r, ctx)?;
            written.extend(files);
            Some(rep)
        }
        None => None,
    };
    let (p, bands, estimates) = forge_of(r, ctx)?;
    let mut out = Output::new(r)?;
    out.json(
        "summary.json",
        SummaryOut {
            stats: &p.stats,
            bands: &bands,
            estimates: &estimates,
            attack: &attack_report,
            defense: defense.as_ref(),
        },
    )?;
    written.extend(out.written);
    if let Some(d) = &defense {
        inconclusive_exit(d)?;
    }
    Ok(written)
}
