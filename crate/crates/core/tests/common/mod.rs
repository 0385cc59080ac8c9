// SPDX-License-Identifier: MIT OR Apache-2.0
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use saelang::{ActivationShard, SaeWeights, ShardEncoding, TokenRecord, Values};

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn vec_f32(rng: &mut ChaCha8Rng, len: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Small integers, so that exact ties are common.
pub fn vec_quantized(rng: &mut ChaCha8Rng, len: usize) -> Vec<f32> {
    (0..len).map(|_| rng.gen_range(-3i32..=3) as f32).collect()
}

pub fn random_sae(
    rng: &mut ChaCha8Rng,
    layer: u16,
    d: usize,
    n: usize,
    k: usize,
    quantized: bool,
) -> SaeWeights {
    let mut draw = |len| {
        if quantized {
            vec_quantized(rng, len)
        } else {
            vec_f32(rng, len, -1.0, 1.0)
        }
    };
    let w_enc = draw(n * d);
    let b_enc = draw(n);
    let w_dec = draw(d * n);
    let b_dec = draw(d);
    SaeWeights::new(layer, d, n, k, w_enc, b_enc, w_dec, b_dec).unwrap()
}

/// Sparse latent shard with random activity.
pub fn random_sparse_shard(
    rng: &mut ChaCha8Rng,
    layer: u16,
    lang: u16,
    dim: u32,
    n_records: usize,
    n_examples: u32,
    density: f64,
) -> ActivationShard {
    let mut s = ActivationShard::new(layer, lang, dim, ShardEncoding::Sparse);
    for _ in 0..n_records {
        let mut pairs = Vec::new();
        for u in 0..dim {
            if rng.gen_bool(density) {
                pairs.push((u, rng.gen_range(0.01f32..3.0)));
            }
        }
        s.records.push(TokenRecord {
            token_id: rng.gen_range(0..500),
            example_id: rng.gen_range(0..n_examples),
            values: Values::Sparse(pairs),
        });
    }
    s
}
