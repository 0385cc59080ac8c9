// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use proptest::prelude::*;
use saelang::lid::{evaluate, f1_score, predict, LidLayer, LidScorer, Scaling, ScoreOptions};
use saelang::{LidModel, TokenRecord, UnitKind, Values};

fn model(sets: Vec<Vec<u32>>, dim: u32) -> LidModel {
    let units: Vec<u32> = {
        let mut u: Vec<u32> = sets.iter().flatten().copied().collect();
        u.sort_unstable();
        u.dedup();
        u
    };
    LidModel {
        unit_kind: UnitKind::SaeFeature,
        languages: (0..sets.len()).map(|i| format!("l{i}")).collect(),
        layers: vec![LidLayer {
            layer: 0,
            dim,
            per_lang_sets: sets,
        }],
        scaling: Scaling {
            epsilon: 1e-6,
            min: units.iter().map(|&u| (0, u, 0.0)).collect(),
            max: units.iter().map(|&u| (0, u, 2.0)).collect(),
        },
    }
}

fn record(active: &[u32], value: f32) -> TokenRecord {
    TokenRecord {
        token_id: 0,
        example_id: 0,
        values: Values::Sparse(active.iter().map(|&u| (u, value)).collect()),
    }
}

proptest! {
    #[test]
    fn evaluate_matches_brute_force(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..200)) {
        let (pred, gold): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let r = evaluate(&pred, &gold, 4).unwrap();
        let mut f1s = Vec::new();
        for k in 0..4 {
            let tp = pairs.iter().filter(|&&(p, g)| p == k && g == k).count() as f64;
            let fp = pairs.iter().filter(|&&(p, g)| p == k && g != k).count() as f64;
            let fne = pairs.iter().filter(|&&(p, g)| p != k && g == k).count() as f64;
            let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let rec = if tp + fne > 0.0 { tp / (tp + fne) } else { 0.0 };
            let f1 = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
            prop_assert!((r.per_language[k].precision - prec).abs() < 1e-12);
            prop_assert!((r.per_language[k].recall - rec).abs() < 1e-12);
            prop_assert!((r.per_language[k].f1 - f1).abs() < 1e-12);
            f1s.push(f1);
        }
        prop_assert!((r.macro_f1 - f1s.iter().sum::<f64>() / 4.0).abs() < 1e-12);
        let correct = pairs.iter().filter(|&&(p, g)| p == g).count();
        prop_assert_eq!(r.accuracy, correct as f64 / pairs.len() as f64);
        prop_assert_eq!(r.confusion.iter().flatten().sum::<u64>(), pairs.len() as u64);
    }

    #[test]
    fn predict_is_scale_invariant(scores in proptest::collection::vec(0.0f64..100.0, 1..10), c in 1e-3f64..1e3) {
        let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
        prop_assert_eq!(predict(&scores), predict(&scaled));
    }

    #[test]
    fn unweighted_scores_are_monotone_counts(tokens in proptest::collection::vec(proptest::collection::btree_set(0u32..12, 0..6), 1..20)) {
        let m = model(vec![vec![0, 1, 2], vec![3, 4], vec![5, 6, 7, 8]], 12);
        let scorer = LidScorer::new(&m, ScoreOptions::default());
        let recs: Vec<TokenRecord> = tokens.iter().map(|s| record(&s.iter().copied().collect::<Vec<_>>(), 0.7)).collect();
        let mut prev = vec![0.0; 3];
        for n in 1..=recs.len() {
            let s = scorer.score(recs[..n].iter().map(|r| (0u16, r))).unwrap();
            for (a, b) in s.iter().zip(&prev) {
                prop_assert!(a >= b);
                prop_assert_eq!(a.fract(), 0.0);
            }
            prev = s;
        }
    }

    #[test]
    fn single_language_stream_predicts_that_language(lang in 0usize..3, picks in proptest::collection::vec(any::<prop::sample::Index>(), 1..10), binary in any::<bool>()) {
        let sets = vec![vec![0, 1, 2], vec![3, 4], vec![5, 6, 7, 8]];
        let m = model(sets.clone(), 12);
        let recs: Vec<TokenRecord> = picks.iter().map(|i| record(&[sets[lang][i.index(sets[lang].len())]], if binary { 1.0 } else { 1.7 })).collect();
        for weighted in [false, true] {
            let s = LidScorer::new(&m, ScoreOptions { weighted, normalize: false }).score(recs.iter().map(|r| (0u16, r))).unwrap();
            prop_assert_eq!(predict(&s), Some(lang));
        }
    }
}

#[test]
fn weighted_contribution_is_min_max_scaled() {
    let m = model(vec![vec![0], vec![1]], 4);
    let s = LidScorer::new(
        &m,
        ScoreOptions {
            weighted: true,
            normalize: false,
        },
    )
    .score([(0u16, &record(&[0], 1.0))])
    .unwrap();
    assert!((s[0] - 1.0 / (2.0 + 1e-6)).abs() < 1e-15);
    assert_eq!(s[1], 0.0);
}

#[test]
fn f1_reference_value() {
    assert!((f1_score(0.990, 0.966) - 0.978).abs() <= 0.0005);
    assert_eq!(f1_score(0.0, 0.0), 0.0);
}
