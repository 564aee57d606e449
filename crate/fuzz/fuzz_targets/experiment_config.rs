#![no_main]

use std::path::Path;

use dla_intercept_cli::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = ExperimentConfig::from_json(text) {
        // Resolution only reads; a missing base makes file references fail cleanly.
        let _ = config.resolve(Path::new("/nonexistent-fuzz-base"), None, None);
    }
});
