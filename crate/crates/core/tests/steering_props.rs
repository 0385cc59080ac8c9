// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use proptest::prelude::*;
use saelang::steering::{apply_steering, steer_shard, NeuronDirections, SaeDirections};
use saelang::{
    ActivationShard, FfnDown, SaeWeights, ShardEncoding, SteeringEntry, SteeringPlan, TokenRecord,
    UnitKind, Values,
};

fn plan(entries: &[(u32, f32)], alpha: f32, layer: u16) -> SteeringPlan {
    SteeringPlan {
        unit_kind: UnitKind::SaeFeature,
        entries: entries
            .iter()
            .map(|&(index, amplitude)| SteeringEntry {
                layer,
                index,
                amplitude,
                alpha,
            })
            .collect(),
    }
}

fn setup(seed: u64, d: usize, n: usize) -> (SaeWeights, Vec<(u32, f32)>) {
    use rand::Rng;
    let mut rng = common::rng(seed);
    let w = common::random_sae(&mut rng, 2, d, n, 1, false);
    let picks = (0..3)
        .map(|_| (rng.gen_range(0..n as u32), rng.gen_range(0.0f32..5.0)))
        .collect();
    (w, picks)
}

fn dense_shard(seed: u64, d: u32, n: usize) -> ActivationShard {
    let mut rng = common::rng(seed);
    let mut s = ActivationShard::new(2, 1, d, ShardEncoding::Dense);
    for t in 0..n as u32 {
        s.records.push(TokenRecord {
            token_id: t * 7,
            example_id: t / 3,
            values: Values::Dense(common::vec_f32(&mut rng, d as usize, -10.0, 10.0)),
        });
    }
    s
}

#[test]
fn zero_alpha_is_bit_exact_identity() {
    for seed in 0..50 {
        let (w, picks) = setup(seed, 16, 64);
        let dirs = SaeDirections::new([&w]);
        let mut s = dense_shard(seed, 16, 20);
        // values that a naive `x + 0.0 * d` would disturb
        s.records[0].values = Values::Dense(vec![-0.0; 16]);
        let out = steer_shard(&s, &plan(&picks, 0.0, 2), &dirs).unwrap();
        assert_eq!(
            saelang::store::encode_shard(&out).unwrap(),
            saelang::store::encode_shard(&s).unwrap()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn additive_in_alpha(seed in any::<u64>(), a1 in -4.0f32..4.0, a2 in -4.0f32..4.0) {
        let (w, picks) = setup(seed, 8, 16);
        let dirs = SaeDirections::new([&w]);
        let mut rng = common::rng(seed ^ 1);
        let x = common::vec_f32(&mut rng, 8, -1.0, 1.0);
        let once = apply_steering(&x, 2, &plan(&picks, a1 + a2, 2), &dirs).unwrap();
        let twice = apply_steering(&apply_steering(&x, 2, &plan(&picks, a1, 2), &dirs).unwrap(), 2, &plan(&picks, a2, 2), &dirs).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn metadata_and_dimension_preserved() {
    let (w, picks) = setup(5, 12, 30);
    let dirs = SaeDirections::new([&w]);
    let s = dense_shard(5, 12, 40);
    let out = steer_shard(&s, &plan(&picks, 1.5, 2), &dirs).unwrap();
    assert_eq!(
        (out.layer, out.language_id, out.dim, out.encoding),
        (s.layer, s.language_id, s.dim, s.encoding)
    );
    for (a, b) in s.records.iter().zip(&out.records) {
        assert_eq!((a.token_id, a.example_id), (b.token_id, b.example_id));
        let (Values::Dense(x), Values::Dense(y)) = (&a.values, &b.values) else {
            panic!()
        };
        assert_eq!(x.len(), y.len());
    }
    // another layer is untouched
    assert_eq!(steer_shard(&s, &plan(&picks, 1.5, 9), &dirs).unwrap(), s);
}

#[test]
fn neuron_directions_use_down_projection_columns() {
    // 2 x 3 matrix, column 1 = (2, 5)
    let f = FfnDown::new(0, 2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let dirs = NeuronDirections::new([&f]);
    let p = SteeringPlan {
        unit_kind: UnitKind::FfnNeuron,
        entries: vec![SteeringEntry {
            layer: 0,
            index: 1,
            amplitude: 2.0,
            alpha: -0.5,
        }],
    };
    assert_eq!(
        apply_steering(&[10.0, 10.0], 0, &p, &dirs).unwrap(),
        vec![8.0, 5.0]
    );
}
