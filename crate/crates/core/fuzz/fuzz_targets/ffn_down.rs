// SPDX-License-Identifier: MIT OR Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use saelang::store::{decode_ffn_down, encode_ffn_down};

fuzz_target!(|data: &[u8]| {
    if let Ok(v) = decode_ffn_down(data) {
        assert_eq!(encode_ffn_down(&v), data);
    }
});
