// SPDX-License-Identifier: MIT OR Apache-2.0

//! Logit lens over a single direction: `softmax(W_U d)`.
//!
//! The direction is projected with unit activation, so the distribution
//! shows which vocabulary tokens the feature promotes on its own.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::Unembedding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub token_id: u32,
    pub token: String,
    pub probability: f64,
}

/// `W_U · direction`, accumulated in f64.
pub fn logits(direction: &[f32], u: &Unembedding) -> Result<Vec<f64>> {
    if direction.len() != u.d() {
        return Err(Error::DimMismatch {
            context: "lens direction",
            expected: u.d() as u64,
            found: direction.len() as u64,
        });
    }
    Ok((0..u.vocab())
        .map(|t| {
            u.row(t)
                .iter()
                .zip(direction)
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum()
        })
        .collect())
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Token ids of the `top_n` largest logits, ties by lower id.
pub fn rank_logits(logits: &[f64], top_n: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..logits.len()).collect();
    let by = |a: &usize, b: &usize| logits[*b].total_cmp(&logits[*a]).then(a.cmp(b));
    if top_n < ids.len() && top_n > 0 {
        ids.select_nth_unstable_by(top_n - 1, by);
        ids.truncate(top_n);
    }
    ids.sort_by(by);
    ids.truncate(top_n);
    ids
}

/// Full token distribution promoted by `direction`.
pub fn token_distribution(direction: &[f32], u: &Unembedding) -> Result<Vec<f64>> {
    Ok(softmax(&logits(direction, u)?))
}

/// The `top_n` most promoted tokens with their probabilities.
pub fn top_tokens(direction: &[f32], u: &Unembedding, top_n: usize) -> Result<Vec<TokenScore>> {
    if top_n == 0 || top_n > u.vocab() {
        return Err(Error::InvalidParam(format!(
            "top_n must be in 1..={}, got {top_n}",
            u.vocab()
        )));
    }
    let l = logits(direction, u)?;
    let probs = softmax(&l);
    Ok(rank_logits(&l, top_n)
        .into_iter()
        .map(|t| TokenScore {
            token_id: t as u32,
            token: u.tokens()[t].clone(),
            probability: probs[t],
        })
        .collect())
}
