#![no_main]

use libfuzzer_sys::fuzz_target;
use steplab::kinematics::{forward_kinematics, RobotModel};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(model) = RobotModel::from_json_str(text) else {
        return;
    };
    // Anything that loads must save and reload to the same document.
    let saved = model.to_json();
    let again = RobotModel::from_json_str(&saved).expect("saved model reloads");
    assert_eq!(again.to_json(), saved);
    let _ = forward_kinematics(&model, &model.neutral_configuration());
});
