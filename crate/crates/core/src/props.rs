// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pairwise diagnostics: decoder cosines, opposing directions,
//! activating-token overlap and activation correlation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sae::feature_direction;
use crate::store::{ActivationShard, SaeWeights};

pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Sorted token positions on which each feature of one layer is active.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActivityIndex {
    positions: Vec<Vec<u64>>,
}

impl ActivityIndex {
    pub fn new(n_features: usize) -> Self {
        Self {
            positions: vec![Vec::new(); n_features],
        }
    }

    /// Index sparse latent shards, numbering tokens consecutively across the
    /// shards in the order given.
    pub fn from_shards<'a>(
        n_features: usize,
        shards: impl IntoIterator<Item = &'a ActivationShard>,
    ) -> Result<Self> {
        let mut idx = Self::new(n_features);
        let mut pos = 0u64;
        for s in shards {
            if s.dim as usize != n_features {
                return Err(Error::DimMismatch {
                    context: "activity shard",
                    expected: n_features as u64,
                    found: s.dim as u64,
                });
            }
            for r in &s.records {
                r.values.for_each_active(|u, _| idx.positions[u].push(pos));
                pos += 1;
            }
        }
        Ok(idx)
    }

    pub fn insert(&mut self, feature: usize, position: u64) {
        let v = &mut self.positions[feature];
        if let Err(at) = v.binary_search(&position) {
            v.insert(at, position);
        }
    }

    pub fn positions(&self, feature: usize) -> &[u64] {
        self.positions.get(feature).map_or(&[], Vec::as_slice)
    }

    pub fn co_occurrence(&self, a: usize, b: usize) -> u64 {
        sorted_intersection(self.positions(a), self.positions(b))
    }
}

fn sorted_intersection(a: &[u64], b: &[u64]) -> u64 {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub layer: u16,
    pub feature_a: u32,
    pub feature_b: u32,
    pub cosine: f64,
    pub token_count_a: u64,
    pub token_count_b: u64,
    pub co_occurrence: u64,
}

/// For each target, the other feature of the same SAE whose decoder column
/// has the lowest cosine with the target's. Ties keep the lower index;
/// zero-norm columns are never partners. Reports come back ordered by
/// cosine ascending.
pub fn opposing_pairs(
    w: &SaeWeights,
    targets: &[usize],
    activity: &ActivityIndex,
) -> Result<Vec<PairReport>> {
    let columns: Vec<Vec<f32>> = (0..w.n())
        .map(|j| feature_direction(w, j))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(targets.len());
    for &t in targets {
        if t >= w.n() {
            return Err(Error::IndexOutOfRange {
                index: t as u64,
                bound: w.n() as u64,
            });
        }
        let mut best: Option<(usize, f64)> = None;
        for (j, col) in columns.iter().enumerate() {
            if j == t {
                continue;
            }
            let c = match cosine(&columns[t], col) {
                Ok(c) => c,
                Err(Error::ZeroNorm) if columns[t].iter().any(|&x| x != 0.0) => continue,
                Err(e) => return Err(e),
            };
            if best.is_none_or(|(_, b)| c < b) {
                best = Some((j, c));
            }
        }
        let Some((partner, c)) = best else {
            continue;
        };
        out.push(PairReport {
            layer: w.layer(),
            feature_a: t as u32,
            feature_b: partner as u32,
            cosine: c,
            token_count_a: activity.positions(t).len() as u64,
            token_count_b: activity.positions(partner).len() as u64,
            co_occurrence: activity.co_occurrence(t, partner),
        });
    }
    out.sort_by(|a, b| {
        a.cosine
            .total_cmp(&b.cosine)
            .then(a.feature_a.cmp(&b.feature_a))
    });
    Ok(out)
}

/// Cosine between each target's decoder column and the decoder bias.
pub fn bias_cosines(w: &SaeWeights, targets: &[usize]) -> Result<Vec<(u32, f64)>> {
    targets
        .iter()
        .map(|&t| Ok((t as u32, cosine(&feature_direction(w, t)?, w.b_dec())?)))
        .collect()
}

/// Intersection over union of two token-id sets; zero when both are empty.
pub fn activating_iou(a: &BTreeSet<u32>, b: &BTreeSet<u32>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Sample Pearson correlation of two aligned value series.
pub fn activation_pearson(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidParam("need at least two tokens".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().map(|&x| x as f64).sum::<f64>() / n;
    let mb = b.iter().map(|&x| x as f64).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ConstantSeries);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson restricted to positions where at least one series is active.
pub fn activation_pearson_on_union(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (ka, kb): (Vec<f32>, Vec<f32>) = a
        .iter()
        .zip(b)
        .filter(|(&x, &y)| x > 0.0 || y > 0.0)
        .map(|(&x, &y)| (x, y))
        .unzip();
    activation_pearson(&ka, &kb)
}
