// SPDX-License-Identifier: MIT OR Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use saelang::lid::{LidScorer, ScoreOptions};
use saelang::{LidModel, TokenRecord, Values};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = LidModel::from_json(text) {
        let rec = TokenRecord {
            token_id: 0,
            example_id: 0,
            values: Values::Sparse(vec![(0, 1.0)]),
        };
        for l in &model.layers {
            let scorer = LidScorer::new(
                &model,
                ScoreOptions {
                    weighted: true,
                    normalize: true,
                },
            );
            let _ = scorer.score([(l.layer, &rec)]);
        }
    }
});
