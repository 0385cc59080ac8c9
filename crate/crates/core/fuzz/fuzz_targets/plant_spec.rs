// SPDX-License-Identifier: MIT OR Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use saelang::PlantSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(mut spec) = serde_json::from_str::<PlantSpec>(text) else {
        return;
    };
    if spec.validate().is_ok() {
        // keep generation cheap
        spec.examples_per_lang = spec.examples_per_lang.min(2);
        spec.tokens_per_example = spec.tokens_per_example.min(2);
        spec.n_units = spec.n_units.clamp(1, 4096);
        if spec.validate().is_ok() {
            let _ = saelang::synth::generate(&spec);
        }
    }
});
