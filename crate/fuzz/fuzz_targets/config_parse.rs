#![no_main]

use diffmap::cli::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::from_json(text) {
            let echo = serde_json::to_string(&cfg).unwrap();
            assert_eq!(ExperimentConfig::from_json(&echo).unwrap(), cfg);
        }
    }
});
