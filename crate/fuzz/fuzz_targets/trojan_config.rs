#![no_main]

use dla_intercept::trojan::TrojanConfigFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(file) = serde_json::from_slice::<TrojanConfigFile>(data) {
        let text = serde_json::to_string(&file).unwrap();
        assert_eq!(serde_json::from_str::<TrojanConfigFile>(&text).unwrap(), file);
    }
});
