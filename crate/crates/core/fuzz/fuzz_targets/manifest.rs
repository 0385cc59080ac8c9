// SPDX-License-Identifier: MIT OR Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use saelang::CorpusManifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = CorpusManifest::from_json(text) {
        let again = CorpusManifest::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(again, m);
        let _ = m.shard_paths();
    }
});
