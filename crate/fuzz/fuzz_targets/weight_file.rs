#![no_main]

use dla_intercept::model::{decode_tensors, encode_tensors};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(set) = decode_tensors(data) {
        let again = decode_tensors(&encode_tensors(&set).unwrap()).unwrap();
        assert_eq!(set.len(), again.len());
    }
});
