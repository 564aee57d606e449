#![no_main]

use dla_intercept::data::parse_idx_images;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(images) = parse_idx_images(data) {
        // Accepted images hold byte-valued pixels.
        assert!(images.iter().all(|t| t.values().all(|v| (0.0..=1.0).contains(&v))));
    }
});
