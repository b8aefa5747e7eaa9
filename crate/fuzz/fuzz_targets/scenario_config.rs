#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use steplab::config::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(config) = ScenarioConfig::parse(text, &[]) else {
        return;
    };
    let _ = config.validate(Path::new("/nonexistent"));
    let again = ScenarioConfig::parse(&config.to_json(), &[]).expect("serialised scenario parses");
    assert_eq!(again.to_json(), config.to_json());
});
