// SPDX-License-Identifier: MIT OR Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use saelang::SteeringPlan;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(plan) = SteeringPlan::from_json(text) {
        let json = serde_json::to_string(&plan).unwrap();
        assert_eq!(SteeringPlan::from_json(&json).unwrap(), plan);
    }
});
