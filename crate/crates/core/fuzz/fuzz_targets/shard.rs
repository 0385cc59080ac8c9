// SPDX-License-Identifier: MIT OR Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use saelang::store::{decode_shard, encode_shard, ShardReader};

fuzz_target!(|data: &[u8]| {
    if let Ok(shard) = decode_shard(data) {
        assert_eq!(encode_shard(&shard).unwrap(), data);
    }
    if let Ok(reader) = ShardReader::new(data) {
        for rec in reader {
            if rec.is_err() {
                break;
            }
        }
    }
});
