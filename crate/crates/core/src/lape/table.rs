// SPDX-License-Identifier: MIT OR Apache-2.0

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::UnitKind;
use crate::error::{Error, Result};
use crate::sae;
use crate::store::{ActivationShard, SaeWeights, ShardEncoding, Values};

/// Mergeable per-layer activation counters.
///
/// Example activity is kept as sorted sets of example ids rather than counts
/// so that an example split across shards is still counted once; merging
/// two tables is then exact, and any partition of a token stream yields the
/// same table.
///
/// `value_max` / `value_min` are running extremes of observed values,
/// starting from zero (absent sparse entries are zeros).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTable {
    pub layer: u16,
    pub unit_kind: UnitKind,
    pub n_units: usize,
    pub n_langs: usize,
    tokens_per_lang: Vec<u64>,
    /// `[lang * n_units + unit]`
    active_tokens: Vec<u64>,
    example_ids: Vec<Vec<u32>>,
    /// `[lang * n_units + unit]`, sorted and distinct.
    active_example_ids: Vec<Vec<u32>>,
    value_max: Vec<f32>,
    value_min: Vec<f32>,
}

impl ProbabilityTable {
    pub fn new(layer: u16, unit_kind: UnitKind, n_units: usize, n_langs: usize) -> Self {
        Self {
            layer,
            unit_kind,
            n_units,
            n_langs,
            tokens_per_lang: vec![0; n_langs],
            active_tokens: vec![0; n_langs * n_units],
            example_ids: vec![Vec::new(); n_langs],
            active_example_ids: vec![Vec::new(); n_langs * n_units],
            value_max: vec![0.0; n_units],
            value_min: vec![0.0; n_units],
        }
    }

    /// Add one shard. Dense shards feeding an SAE-feature table are encoded
    /// on the fly and need `sae`.
    pub fn accumulate(&mut self, shard: &ActivationShard, sae: Option<&SaeWeights>) -> Result<()> {
        if shard.layer != self.layer {
            return Err(Error::LayerMismatch {
                expected: self.layer as u32,
                found: shard.layer as u32,
            });
        }
        let lang = shard.language_id as usize;
        if lang >= self.n_langs {
            return Err(Error::LanguageIdOutOfRange {
                id: shard.language_id as u32,
                n_langs: self.n_langs,
            });
        }
        let encoder = match (self.unit_kind, shard.encoding) {
            (UnitKind::SaeFeature, ShardEncoding::Dense) => {
                let w = sae.ok_or_else(|| {
                    Error::KindMismatch(
                        "dense shard for an SAE-feature table needs SAE weights".into(),
                    )
                })?;
                expect_dim("SAE input", w.d(), shard.dim as usize)?;
                expect_dim("SAE latent", self.n_units, w.n())?;
                Some(w)
            }
            _ => {
                expect_dim("shard dim", self.n_units, shard.dim as usize)?;
                None
            }
        };

        let base = lang * self.n_units;
        for rec in &shard.records {
            let encoded;
            let values = match encoder {
                Some(w) => {
                    encoded = sae::encode_record(rec, w)?;
                    &encoded.values
                }
                None => &rec.values,
            };
            let ex = rec.example_id;
            self.tokens_per_lang[lang] += 1;
            push_distinct(&mut self.example_ids[lang], ex);
            match values {
                Values::Dense(v) => {
                    for (u, &x) in v.iter().enumerate() {
                        self.observe(base, u, ex, x);
                    }
                }
                Values::Sparse(pairs) => {
                    for &(u, x) in pairs {
                        self.observe(base, u as usize, ex, x);
                    }
                }
            }
        }

        normalize(&mut self.example_ids[lang]);
        for ids in &mut self.active_example_ids[base..base + self.n_units] {
            normalize(ids);
        }
        Ok(())
    }

    #[inline]
    fn observe(&mut self, base: usize, unit: usize, example: u32, x: f32) {
        if x > self.value_max[unit] {
            self.value_max[unit] = x;
        }
        if x < self.value_min[unit] {
            self.value_min[unit] = x;
        }
        if x > 0.0 {
            self.active_tokens[base + unit] += 1;
            push_distinct(&mut self.active_example_ids[base + unit], example);
        }
    }

    /// Counts added, example sets united, extremes combined.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.layer != other.layer {
            return Err(Error::LayerMismatch {
                expected: self.layer as u32,
                found: other.layer as u32,
            });
        }
        if self.unit_kind != other.unit_kind {
            return Err(Error::KindMismatch(
                "merging tables of different unit kinds".into(),
            ));
        }
        expect_dim("table units", self.n_units, other.n_units)?;
        expect_dim("table languages", self.n_langs, other.n_langs)?;
        let add = |a: &[u64], b: &[u64]| a.iter().zip(b).map(|(x, y)| x + y).collect();
        let unite = |a: &[Vec<u32>], b: &[Vec<u32>]| {
            a.iter().zip(b).map(|(x, y)| union_sorted(x, y)).collect()
        };
        Ok(Self {
            layer: self.layer,
            unit_kind: self.unit_kind,
            n_units: self.n_units,
            n_langs: self.n_langs,
            tokens_per_lang: add(&self.tokens_per_lang, &other.tokens_per_lang),
            active_tokens: add(&self.active_tokens, &other.active_tokens),
            example_ids: unite(&self.example_ids, &other.example_ids),
            active_example_ids: unite(&self.active_example_ids, &other.active_example_ids),
            value_max: self
                .value_max
                .iter()
                .zip(&other.value_max)
                .map(|(a, b)| a.max(*b))
                .collect(),
            value_min: self
                .value_min
                .iter()
                .zip(&other.value_min)
                .map(|(a, b)| a.min(*b))
                .collect(),
        })
    }

    /// Accumulate shards in parallel and merge the partial tables.
    ///
    /// Merging is exact, so the result does not depend on the thread count.
    pub fn from_shards(
        layer: u16,
        unit_kind: UnitKind,
        n_units: usize,
        n_langs: usize,
        shards: &[ActivationShard],
        sae: Option<&SaeWeights>,
    ) -> Result<Self> {
        let empty = Self::new(layer, unit_kind, n_units, n_langs);
        let partials = shards
            .par_iter()
            .map(|s| {
                let mut t = empty.clone();
                t.accumulate(s, sae)?;
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()?;
        partials
            .iter()
            .try_fold(empty.clone(), |acc, t| acc.merge(t))
    }

    pub fn tokens(&self, lang: usize) -> u64 {
        self.tokens_per_lang[lang]
    }

    pub fn examples(&self, lang: usize) -> u64 {
        self.example_ids[lang].len() as u64
    }

    pub fn active_tokens(&self, lang: usize, unit: usize) -> u64 {
        self.active_tokens[lang * self.n_units + unit]
    }

    pub fn active_examples(&self, lang: usize, unit: usize) -> u64 {
        self.active_example_ids[lang * self.n_units + unit].len() as u64
    }

    pub fn max_activation(&self, unit: usize) -> f32 {
        self.value_max[unit]
    }

    pub fn min_activation(&self, unit: usize) -> f32 {
        self.value_min[unit]
    }

    /// Activation probability per language: active tokens over tokens, zero
    /// for languages without tokens.
    pub fn probabilities(&self, unit: usize) -> Vec<f64> {
        (0..self.n_langs)
            .map(|l| ratio(self.active_tokens(l, unit), self.tokens(l)))
            .collect()
    }

    /// Fraction of each language's examples with at least one active token.
    pub fn example_fractions(&self, unit: usize) -> Vec<f64> {
        (0..self.n_langs)
            .map(|l| ratio(self.active_examples(l, unit), self.examples(l)))
            .collect()
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn expect_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimMismatch {
            context,
            expected: expected as u64,
            found: found as u64,
        });
    }
    Ok(())
}

#[inline]
fn push_distinct(ids: &mut Vec<u32>, id: u32) {
    if ids.last() != Some(&id) {
        ids.push(id);
    }
}

fn normalize(ids: &mut Vec<u32>) {
    if ids.windows(2).any(|w| w[0] >= w[1]) {
        ids.sort_unstable();
        ids.dedup();
    }
}

fn union_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::TokenRecord;

    fn sparse_shard(lang: u16, dim: u32, rows: &[(u32, &[(u32, f32)])]) -> ActivationShard {
        let mut s = ActivationShard::new(0, lang, dim, ShardEncoding::Sparse);
        for (t, (ex, pairs)) in rows.iter().enumerate() {
            s.records.push(TokenRecord {
                token_id: t as u32,
                example_id: *ex,
                values: Values::Sparse(pairs.to_vec()),
            });
        }
        s
    }

    #[test]
    fn empty_shard_leaves_table_unchanged() {
        let mut t = ProbabilityTable::new(0, UnitKind::SaeFeature, 8, 2);
        let before = t.clone();
        t.accumulate(&ActivationShard::new(0, 1, 8, ShardEncoding::Sparse), None)
            .unwrap();
        assert_eq!(t, before);
    }

    #[test]
    fn probability_is_active_over_tokens() {
        let mut rows: Vec<(u32, &[(u32, f32)])> = Vec::new();
        for i in 0..10 {
            rows.push((i / 5, if i < 3 { &[(5, 1.0)] } else { &[] }));
        }
        let mut t = ProbabilityTable::new(0, UnitKind::SaeFeature, 8, 1);
        t.accumulate(&sparse_shard(0, 8, &rows), None).unwrap();
        assert_eq!(t.probabilities(5), vec![0.3]);
        assert_eq!(t.active_examples(0, 5), 1);
        assert_eq!(t.examples(0), 2);
        assert_eq!(t.example_fractions(5), vec![0.5]);
    }

    #[test]
    fn example_split_across_shards_counted_once() {
        let a = sparse_shard(0, 4, &[(7, &[(1, 1.0)])]);
        let b = sparse_shard(0, 4, &[(7, &[(1, 2.0)])]);
        let mut one = ProbabilityTable::new(0, UnitKind::SaeFeature, 4, 1);
        one.accumulate(&a, None).unwrap();
        one.accumulate(&b, None).unwrap();
        let merged = {
            let mut x = ProbabilityTable::new(0, UnitKind::SaeFeature, 4, 1);
            let mut y = x.clone();
            x.accumulate(&a, None).unwrap();
            y.accumulate(&b, None).unwrap();
            x.merge(&y).unwrap()
        };
        assert_eq!(one, merged);
        assert_eq!(one.active_examples(0, 1), 1);
        assert_eq!(one.max_activation(1), 2.0);
    }

    #[test]
    fn interleaved_examples_are_normalised() {
        let s = sparse_shard(
            0,
            2,
            &[(3, &[(0, 1.0)]), (1, &[(0, 1.0)]), (3, &[(0, 1.0)])],
        );
        let mut t = ProbabilityTable::new(0, UnitKind::SaeFeature, 2, 1);
        t.accumulate(&s, None).unwrap();
        assert_eq!(t.active_examples(0, 0), 2);
        assert_eq!(t.examples(0), 2);
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let mut t = ProbabilityTable::new(0, UnitKind::SaeFeature, 4, 2);
        t.accumulate(&sparse_shard(1, 4, &[(0, &[(2, 0.5)])]), None)
            .unwrap();
        let e = ProbabilityTable::new(0, UnitKind::SaeFeature, 4, 2);
        assert_eq!(t.merge(&e).unwrap(), t);
        assert_eq!(e.merge(&t).unwrap(), t);
    }

    #[test]
    fn language_out_of_range() {
        let mut t = ProbabilityTable::new(0, UnitKind::SaeFeature, 4, 2);
        let err = t.accumulate(&sparse_shard(2, 4, &[]), None);
        assert!(matches!(
            err,
            Err(Error::LanguageIdOutOfRange { id: 2, .. })
        ));
    }

    #[test]
    fn dim_mismatch() {
        let mut t = ProbabilityTable::new(0, UnitKind::SaeFeature, 4, 2);
        assert!(matches!(
            t.accumulate(&sparse_shard(0, 5, &[]), None),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn dense_shard_is_encoded_with_sae() {
        let w = SaeWeights::new(
            0,
            2,
            2,
            1,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
        )
        .unwrap();
        let mut s = ActivationShard::new(0, 0, 2, ShardEncoding::Dense);
        s.records.push(TokenRecord {
            token_id: 0,
            example_id: 0,
            values: Values::Dense(vec![3.0, 2.0]),
        });
        let mut t = ProbabilityTable::new(0, UnitKind::SaeFeature, 2, 1);
        assert!(t.accumulate(&s, None).is_err());
        t.accumulate(&s, Some(&w)).unwrap();
        // k = 1 keeps only unit 0
        assert_eq!(t.active_tokens(0, 0), 1);
        assert_eq!(t.active_tokens(0, 1), 0);
    }

    #[test]
    fn dense_neurons_track_min() {
        let mut s = ActivationShard::new(0, 0, 2, ShardEncoding::Dense);
        s.records.push(TokenRecord {
            token_id: 0,
            example_id: 0,
            values: Values::Dense(vec![-0.5, 1.5]),
        });
        let mut t = ProbabilityTable::new(0, UnitKind::FfnNeuron, 2, 1);
        t.accumulate(&s, None).unwrap();
        assert_eq!(t.min_activation(0), -0.5);
        assert_eq!(t.max_activation(1), 1.5);
        assert_eq!(t.probabilities(0), vec![0.0]);
    }
}
