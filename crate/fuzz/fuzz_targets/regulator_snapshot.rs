#![no_main]

use libfuzzer_sys::fuzz_target;
use steplab::neuroreg::load_snapshot;
use steplab::LipState;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(regulator) = load_snapshot(text) else { return };
    let _ = regulator.forward(LipState::new(0.1, -0.2), 0.1, 0.0);
    let again = load_snapshot(&regulator.snapshot().to_json()).expect("snapshot reloads");
    assert_eq!(again.snapshot(), regulator.snapshot());
});
