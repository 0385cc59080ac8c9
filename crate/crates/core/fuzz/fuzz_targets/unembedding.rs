// SPDX-License-Identifier: MIT OR Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use saelang::store::{decode_unembedding, encode_unembedding};

fuzz_target!(|data: &[u8]| {
    if let Ok(v) = decode_unembedding(data) {
        assert_eq!(encode_unembedding(&v), data);
    }
});
