#![no_main]

use distill_harness::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    for parsed in [RunConfig::from_toml(text), RunConfig::from_json(text)] {
        if let Ok(c) = parsed {
            let _ = c.model_specs();
        }
    }
});
