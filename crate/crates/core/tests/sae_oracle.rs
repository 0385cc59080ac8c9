// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use proptest::prelude::*;
use rand::Rng;
use saelang::sae::{
    decode, decompose, encode, encode_shard, feature_direction, pre_activations, top_k_positive,
};
use saelang::{ActivationShard, LatentVector, SaeWeights, ShardEncoding, TokenRecord, Values};

/// Recompute the pre-activations and pick the support with a full sort.
#[allow(clippy::needless_range_loop)]
fn oracle_support(x: &[f32], w: &SaeWeights) -> Vec<(u32, f32)> {
    let (d, n) = (w.d(), w.n());
    let mut pre = Vec::with_capacity(n);
    for j in 0..n {
        let mut acc = 0.0f32;
        for i in 0..d {
            acc += w.w_enc()[j * d + i] * (x[i] - w.b_dec()[i]);
        }
        pre.push((j as u32, (acc + w.b_enc()[j]).max(0.0)));
    }
    pre.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut kept: Vec<(u32, f32)> = pre
        .into_iter()
        .take(w.k())
        .filter(|&(_, v)| v > 0.0)
        .collect();
    kept.sort_by_key(|&(j, _)| j);
    kept
}

#[test]
fn top_k_matches_full_sort_oracle() {
    let mut rng = common::rng(11);
    for case in 0..1_000 {
        let d = rng.gen_range(1..=64);
        let n = rng.gen_range(1..=512);
        let k = rng.gen_range(1..=16.min(n));
        let quantized = case % 2 == 0;
        let w = common::random_sae(&mut rng, 0, d, n, k, quantized);
        for _ in 0..5 {
            let x = if quantized {
                common::vec_quantized(&mut rng, d)
            } else {
                common::vec_f32(&mut rng, d, -2.0, 2.0)
            };
            let z = encode(&x, &w).unwrap();
            assert_eq!(z.entries, oracle_support(&x, &w), "case {case}");
        }
    }
}

#[test]
fn ties_keep_lower_index() {
    assert_eq!(
        top_k_positive(&[1.0, 2.0, 2.0, 2.0, 0.5], 2),
        vec![(1, 2.0), (2, 2.0)]
    );
    assert_eq!(top_k_positive(&[0.0, -1.0, 0.0], 3), vec![]);
    assert_eq!(
        top_k_positive(&[3.0, 0.0, 1.0], 3),
        vec![(0, 3.0), (2, 1.0)]
    );
}

#[test]
fn decomposition_identity() {
    let mut rng = common::rng(12);
    for _ in 0..1_000 {
        let d = rng.gen_range(1..=32);
        let n = rng.gen_range(1..=128);
        let k = rng.gen_range(1..=n.min(16));
        let w = common::random_sae(&mut rng, 0, d, n, k, false);
        let x = common::vec_f32(&mut rng, d, -3.0, 3.0);
        let r = decompose(&x, &w).unwrap();
        let z = encode(&x, &w).unwrap();
        // rebuild from the decoder columns independently of `decode`
        let mut rebuilt: Vec<f64> = w.b_dec().iter().map(|&b| b as f64).collect();
        for &(j, v) in &z.entries {
            for (acc, c) in rebuilt
                .iter_mut()
                .zip(feature_direction(&w, j as usize).unwrap())
            {
                *acc += v as f64 * c as f64;
            }
        }
        for i in 0..d {
            let total = rebuilt[i] + r.error[i] as f64;
            let tol = 1e-5 * (1.0 + (x[i] as f64).abs());
            assert!((x[i] as f64 - total).abs() <= tol, "{} vs {}", x[i], total);
        }
    }
}

proptest! {
    #[test]
    fn support_bounded_and_positive(seed in any::<u64>(), d in 1usize..16, n in 1usize..64, kk in 1usize..16) {
        let mut rng = common::rng(seed);
        let k = kk.min(n);
        let w = common::random_sae(&mut rng, 0, d, n, k, seed % 2 == 0);
        let x = common::vec_f32(&mut rng, d, -2.0, 2.0);
        let z = encode(&x, &w).unwrap();
        prop_assert!(z.len() <= k);
        prop_assert!(z.entries.iter().all(|&(_, v)| v > 0.0));
        prop_assert!(z.entries.windows(2).all(|p| p[0].0 < p[1].0));
    }

    #[test]
    fn doubling_a_kept_value_keeps_it(values in proptest::collection::vec(-4.0f32..4.0, 1..60), k in 1usize..10, pick in any::<prop::sample::Index>()) {
        let kept = top_k_positive(&values, k);
        prop_assume!(!kept.is_empty());
        let (j, _) = kept[pick.index(kept.len())];
        let mut boosted = values.clone();
        boosted[j as usize] *= 2.0;
        prop_assert!(top_k_positive(&boosted, k).iter().any(|&(i, _)| i == j));
    }

    #[test]
    fn decode_of_empty_latent_is_bias(seed in any::<u64>(), d in 1usize..10, n in 1usize..10) {
        let mut rng = common::rng(seed);
        let w = common::random_sae(&mut rng, 0, d, n, 1, false);
        let z = LatentVector::new(n, vec![]).unwrap();
        prop_assert_eq!(decode(&z, &w).unwrap(), w.b_dec().to_vec());
    }
}

#[test]
fn shard_encoding_matches_per_record_encode() {
    let mut rng = common::rng(13);
    let w = common::random_sae(&mut rng, 3, 8, 40, 5, false);
    let mut s = ActivationShard::new(3, 1, 8, ShardEncoding::Dense);
    for t in 0..25 {
        s.records.push(TokenRecord {
            token_id: t,
            example_id: t / 5,
            values: Values::Dense(common::vec_f32(&mut rng, 8, -1.0, 1.0)),
        });
    }
    let z = encode_shard(&s, &w).unwrap();
    assert_eq!(
        (z.layer, z.language_id, z.dim, z.encoding),
        (3, 1, 40, ShardEncoding::Sparse)
    );
    for (a, b) in s.records.iter().zip(&z.records) {
        let Values::Dense(x) = &a.values else {
            unreachable!()
        };
        assert_eq!(b.values, Values::Sparse(encode(x, &w).unwrap().entries));
        assert_eq!((a.token_id, a.example_id), (b.token_id, b.example_id));
    }
    assert_eq!(
        pre_activations(&[0.0; 3], &w).unwrap_err().kind(),
        "DimMismatch"
    );
}
