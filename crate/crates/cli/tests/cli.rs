use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dla_intercept::data::{synthesize, write_idx, SynthMode};
use dla_intercept::model::{build_lenet, save_weights, seed_weights};
use dla_intercept::ops::scale;
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dla-intercept"))
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, value: &Value) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
        p
    }

    fn run(&self, cmd: &str, config: &Path, extra: &[&str]) -> Output {
        bin().arg(cmd).arg("--config").arg(config).args(extra).output().unwrap()
    }

    fn json(&self, rel: &str) -> Value {
        serde_json::from_str(&std::fs::read_to_string(self.path(rel)).unwrap()).unwrap()
    }
}

fn small(mut extra: Value) -> Value {
    let mut base = json!({
        "modelName": "lenet",
        "weights": {"seed": 1},
        "dataset": {"source": "synthetic", "seed": 3, "split": {"validationCount": 40, "streamCount": 60}},
        "monteCarlo": {"samples": 2000},
        "outputDir": "out"
    });
    base.as_object_mut().unwrap().append(extra.as_object_mut().unwrap());
    base
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files_under(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn missing_weights_path_names_field() {
    let f = Fixture::new();
    let cfg = f.config("c.json", &small(json!({"weights": {"path": "nope.dlaw"}})));
    let o = f.run("profile", &cfg, &[]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("weights.path"), "{}", stderr(&o));
}

#[test]
fn missing_config_flag_and_bad_json() {
    let o = bin().arg("profile").output().unwrap();
    assert_eq!(code(&o), 2);
    let f = Fixture::new();
    std::fs::write(f.path("bad.json"), "{ not json").unwrap();
    assert_eq!(code(&f.run("profile", &f.path("bad.json"), &[])), 2);
    let cfg = f.config("u.json", &small(json!({"surprise": 1})));
    assert_eq!(code(&f.run("profile", &cfg, &[])), 2);
}

#[test]
fn profile_writes_two_files_deterministically() {
    let f = Fixture::new();
    let cfg = f.config("c.json", &small(json!({})));
    let o = f.run("profile", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(files_under(&f.path("out")), ["histogram.csv", "profile.json"]);
    let first = std::fs::read(f.path("out/profile.json")).unwrap();
    let csv = std::fs::read(f.path("out/histogram.csv")).unwrap();
    assert_eq!(code(&f.run("profile", &cfg, &[])), 0);
    assert_eq!(std::fs::read(f.path("out/profile.json")).unwrap(), first);
    assert_eq!(std::fs::read(f.path("out/histogram.csv")).unwrap(), csv);

    let v = f.json("out/profile.json");
    assert_eq!(v["formatVersion"], 1);
    assert_eq!(v["config"]["watchLayer"], "fc1");
    assert_eq!(v["config"]["kLo"], 3.0);
    assert_eq!(v["config"]["monteCarlo"]["seed"], 0);
    assert_eq!(v["stats"]["count"], 40 * 120);
    assert!(String::from_utf8(csv).unwrap().starts_with("bin_lo,bin_hi,count\n"));
}

#[test]
fn seed_and_out_overrides() {
    let f = Fixture::new();
    let cfg = f.config("c.json", &small(json!({"weights": {"seed": null}})));
    let alt = f.path("alt");
    let o = f.run("profile", &cfg, &["--seed", "9", "--out", alt.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(alt.join("profile.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["seed"], 9);
    assert_eq!(v["config"]["weights"]["seed"], 9);
    assert_eq!(v["config"]["dataset"]["seed"], 3);
    assert!(!f.path("out").exists());
}

#[test]
fn forge_rejects_bad_multipliers_and_zero_weights() {
    let f = Fixture::new();
    let cfg = f.config("k.json", &small(json!({"kLo": 4.0, "kHi": 3.0})));
    assert_eq!(code(&f.run("forge", &cfg, &[])), 2);

    let mut zero = seed_weights(&build_lenet(), 0);
    for l in &mut zero.layers {
        if let Some(k) = &mut l.params {
            k.tensor = scale(&k.tensor, 0.0);
            k.bias = scale(&k.bias, 0.0);
        }
    }
    save_weights(&zero, f.path("zero.dlaw")).unwrap();
    let cfg = f.config("z.json", &small(json!({"weights": {"path": "zero.dlaw"}})));
    let o = f.run("forge", &cfg, &[]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn forge_outputs_bands_outside_validation() {
    let f = Fixture::new();
    let cfg = f.config("c.json", &small(json!({"weights": {"seed": 1}})));
    let o = f.run("forge", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let bands = f.json("out/bands.json");
    let est = f.json("out/estimate.json");
    assert_eq!(bands["bands"].as_array().unwrap().len(), 2);
    assert_eq!(est["layerLength"], 120);
    for key in ["analytic", "monteCarlo", "samples", "confidenceHalfWidth"] {
        assert!(est["perElement"].get(key).is_some(), "{key}");
    }
}

#[test]
fn attack_with_unreachable_bands() {
    let f = Fixture::new();
    let band = |side: &str| json!({"layerName": "fc1", "lo": 1e9, "hi": 2e9, "side": side, "kLo": 3.0, "kHi": 4.0});
    let cfg = f.config(
        "c.json",
        &small(json!({"trojan": {"bands": [band("upper")], "maliciousImages": {"noise": {"count": 2}}}})),
    );
    let o = f.run("attack", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        files_under(&f.path("out")),
        ["attack_report.json", "clean_labels.csv", "events.json", "labels.csv"]
    );
    let r = f.json("out/attack_report.json");
    assert_eq!(r["report"]["triggerCount"], 0);
    assert_eq!(r["report"]["imagesProcessed"], 60);
    assert_eq!(r["report"]["triggerRate"], 0.0);
    assert_eq!(r["report"]["cleanEquivalence"], true);
    assert_eq!(
        std::fs::read(f.path("out/labels.csv")).unwrap(),
        std::fs::read(f.path("out/clean_labels.csv")).unwrap()
    );
    assert_eq!(f.json("out/events.json")["events"], json!([]));
}

#[test]
fn attack_rate_is_count_over_images() {
    let f = Fixture::new();
    // A band covering typical fc1 values fires often.
    let band = json!({"layerName": "fc1", "lo": 0.05, "hi": 10.0, "side": "upper", "kLo": 3.0, "kHi": 4.0});
    let cfg = f.config("c.json", &small(json!({"trojan": {"bands": [band]}})));
    let o = f.run("attack", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = &f.json("out/attack_report.json")["report"];
    let (count, n) = (r["triggerCount"].as_f64().unwrap(), r["imagesProcessed"].as_f64().unwrap());
    assert!(count > 0.0);
    assert_eq!(r["triggerRate"].as_f64().unwrap(), count / n);
    assert!(r["substitutions"].as_u64().unwrap() <= count as u64);
    let labels = std::fs::read_to_string(f.path("out/labels.csv")).unwrap();
    assert!(labels.lines().skip(1).any(|l| l.ends_with(",true")));
}

#[test]
fn defend_requires_section() {
    let f = Fixture::new();
    let cfg = f.config("c.json", &small(json!({})));
    let o = f.run("defend", &cfg, &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("defense"));
}

#[test]
fn defend_partition_k2() {
    let f = Fixture::new();
    let cfg = f.config("c.json", &small(json!({"defense": {"partition": {"groups": 2}}})));
    let o = f.run("defend", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = &f.json("out/defense_report.json")["report"];
    assert_eq!(r["kind"], "distributed");
    assert_eq!(r["verdict"], "effective");
    assert!(!r["exposureFindings"].as_array().unwrap().is_empty());
    assert!(f.path("out/views/group1.dlaw").is_file());

    let cfg = f.config("k1.json", &small(json!({"defense": {"partition": {"groups": 1}}})));
    assert_eq!(code(&f.run("defend", &cfg, &[])), 2);
}

#[test]
fn defend_identity_scaling_is_ineffective() {
    let f = Fixture::new();
    let cfg = f.config(
        "c.json",
        &small(json!({
            "dataset": {"source": "synthetic", "seed": 3, "split": {"validationCount": 100, "streamCount": 300}},
            "defense": {"altered": {"range": [1.0, 1.0]}}
        })),
    );
    let o = f.run("defend", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = &f.json("out/defense_report.json")["report"];
    assert_eq!(r["verdict"], "ineffective");
    assert_eq!(r["bandCollisionCount"], 0);
    let scales = f.json("out/defense_report.json")["imageScales"].clone();
    assert!(scales.as_array().unwrap().iter().all(|s| s == 1.0));
}

#[test]
fn mnist_idx_dataset() {
    let f = Fixture::new();
    let ds = synthesize(30, &[1, 28, 28], 4, SynthMode::Uniform).unwrap();
    write_idx(&ds, f.path("img.idx"), f.path("lbl.idx")).unwrap();
    let cfg = f.config(
        "c.json",
        &small(json!({
            "dataset": {"source": "mnist", "images": "img.idx", "labels": "lbl.idx",
                        "split": {"validationCount": 10, "streamCount": 20}}
        })),
    );
    let o = f.run("profile", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(f.json("out/profile.json")["stats"]["count"], 10 * 120);

    std::fs::write(f.path("lbl.idx"), [0u8, 0, 8, 1, 0, 0, 0, 30]).unwrap();
    let o = f.run("profile", &cfg, &[]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("offset"), "{}", stderr(&o));

    let cfg = f.config(
        "big.json",
        &small(json!({
            "dataset": {"source": "mnist", "images": "img.idx", "labels": "lbl.idx",
                        "split": {"validationCount": 100, "streamCount": 1000}}
        })),
    );
    write_idx(&ds, f.path("img.idx"), f.path("lbl.idx")).unwrap();
    assert_eq!(code(&f.run("profile", &cfg, &[])), 3);
}

#[test]
fn report_runs_every_phase() {
    let f = Fixture::new();
    let cfg = f.config("c.json", &small(json!({"defense": {"partition": {"cutBefore": ["fc1"]}}})));
    let o = f.run("report", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = f.json("out/summary.json");
    for key in ["stats", "bands", "estimates", "attack", "defense", "config", "formatVersion"] {
        assert!(s.get(key).is_some(), "{key}");
    }
}
