#![no_main]

use dla_intercept::data::{encode_cifar10, parse_cifar10_bytes};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = parse_cifar10_bytes(data) {
        // Records are stored losslessly, so re-encoding reproduces the input.
        assert_eq!(encode_cifar10(&ds).unwrap(), data);
    }
});
