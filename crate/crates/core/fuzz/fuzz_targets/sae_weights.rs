// SPDX-License-Identifier: MIT OR Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use saelang::store::{decode_sae_weights, encode_sae_weights};

fuzz_target!(|data: &[u8]| {
    if let Ok(v) = decode_sae_weights(data) {
        assert_eq!(encode_sae_weights(&v), data);
    }
});
