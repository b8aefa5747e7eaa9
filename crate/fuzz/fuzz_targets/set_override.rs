#![no_main]

use libfuzzer_sys::fuzz_target;
use steplab::config::{apply_override, ScenarioConfig};

// Input: one override per line, applied to a default scenario document.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut doc = serde_json::json!({ "schema": 1, "mode": "s2s" });
    for line in text.lines() {
        let _ = apply_override(&mut doc, line);
    }
    let _ = ScenarioConfig::from_value(doc);
});
