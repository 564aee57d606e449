use std::path::Path;

use dla_intercept_cli::ExperimentConfig;

#[test]
fn experiment_config_seeds_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/experiment_config");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let cfg = ExperimentConfig::from_json(&text).unwrap_or_else(|e| panic!("{}: {}", path.display(), e.message));
        // File references cannot resolve against a missing base; that must be an error, not a panic.
        let _ = cfg.resolve(Path::new("/nonexistent-fuzz-base"), None, None);
        n += 1;
    }
    assert!(n > 0);
}
