//! The input-interception Trojan: trigger check, next-cycle payload state
//! machine, compromised stream runner and attack evaluation.

mod file;
mod machine;
mod runner;
mod trigger;

pub use file::{decode_images, encode_images, image_entry_name, noise_images, TrojanConfigFile};
pub use machine::{EffectiveInput, EventKind, Mode, Selection, StepOutcome, TriggerEvent, TrojanConfig, TrojanState};
pub use runner::{
    clean_cycle_labels, clean_labels, clean_traces, evaluate_attack, export_labels, read_labels_csv, run_compromised,
    run_compromised_observed, write_labels_csv, AttackReport, CompromisedRun, CycleLabel,
};
pub use trigger::{check_trigger, first_hit, measure_trigger_rate, RateMeasurement};
