#![no_main]

use dla_intercept::data::parse_idx_labels;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(labels) = parse_idx_labels(data) {
        assert!(labels.iter().all(|&l| l < 10));
        assert_eq!(labels.len() + 8, data.len());
    }
});
