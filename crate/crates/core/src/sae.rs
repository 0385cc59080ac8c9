// SPDX-License-Identifier: MIT OR Apache-2.0

//! TopK sparse autoencoder inference.
//!
//! `z = TopK_k(ReLU(W_enc (x - b_dec) + b_enc))` and `x̂ = W_dec z + b_dec`.
//! Only strictly positive values can be selected, so a latent never holds a
//! zero entry even when fewer than `k` pre-activations are positive. Among
//! equal values the lower index wins.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::store::{ActivationShard, SaeWeights, ShardEncoding, TokenRecord, Values};

/// Sparse SAE activation: at most `k` strictly positive entries, sorted by
/// index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatentVector {
    pub dim: usize,
    pub entries: Vec<(u32, f32)>,
}

impl LatentVector {
    pub fn new(dim: usize, mut entries: Vec<(u32, f32)>) -> Result<Self> {
        entries.sort_by_key(|&(i, _)| i);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::NonMonotoneIndices);
        }
        if let Some(&(i, _)) = entries.iter().find(|&&(i, _)| i as usize >= dim) {
            return Err(Error::IndexOutOfRange {
                index: i as u64,
                bound: dim as u64,
            });
        }
        Ok(Self { dim, entries })
    }

    pub fn support(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|&(i, _)| i)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `x = x_hat + error`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub x_hat: Vec<f32>,
    pub error: Vec<f32>,
}

fn check_input(x: &[f32], w: &SaeWeights) -> Result<()> {
    if x.len() != w.d() {
        return Err(Error::DimMismatch {
            context: "SAE input",
            expected: w.d() as u64,
            found: x.len() as u64,
        });
    }
    Ok(())
}

/// `W_enc (x - b_dec) + b_enc` before the ReLU, summed over the input
/// dimension in index order.
pub fn pre_activations(x: &[f32], w: &SaeWeights) -> Result<Vec<f32>> {
    check_input(x, w)?;
    let centered: Vec<f32> = x.iter().zip(w.b_dec()).map(|(a, b)| a - b).collect();
    Ok((0..w.n())
        .map(|j| {
            let row = w.encoder_row(j);
            let mut acc = 0.0f32;
            for (r, c) in row.iter().zip(&centered) {
                acc += r * c;
            }
            acc + w.b_enc()[j]
        })
        .collect())
}

/// Descending by value, ascending by index among equal values.
fn rank(a: &(u32, f32), b: &(u32, f32)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Keep the `k` largest strictly positive entries of `values`.
pub fn top_k_positive(values: &[f32], k: usize) -> Vec<(u32, f32)> {
    let mut positive: Vec<(u32, f32)> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, &v)| (i as u32, v))
        .collect();
    if positive.len() > k {
        if k == 0 {
            return Vec::new();
        }
        positive.select_nth_unstable_by(k - 1, rank);
        positive.truncate(k);
    }
    positive.sort_unstable_by_key(|&(i, _)| i);
    positive
}

pub fn encode(x: &[f32], w: &SaeWeights) -> Result<LatentVector> {
    let pre = pre_activations(x, w)?;
    Ok(LatentVector {
        dim: w.n(),
        entries: top_k_positive(&pre, w.k()),
    })
}

/// `Σ_j z_j d^j + b_dec`, accumulated in f64.
fn decode_wide(z: &LatentVector, w: &SaeWeights) -> Result<Vec<f64>> {
    if z.dim != w.n() {
        return Err(Error::DimMismatch {
            context: "latent",
            expected: w.n() as u64,
            found: z.dim as u64,
        });
    }
    let n = w.n();
    if let Some(&(j, _)) = z.entries.iter().find(|&&(j, _)| j as usize >= n) {
        return Err(Error::IndexOutOfRange {
            index: j as u64,
            bound: n as u64,
        });
    }
    let dec = w.w_dec();
    Ok(w.b_dec()
        .iter()
        .enumerate()
        .map(|(i, &bias)| {
            let row = &dec[i * n..(i + 1) * n];
            let mut acc = 0.0f64;
            for &(j, v) in &z.entries {
                acc += row[j as usize] as f64 * v as f64;
            }
            acc + bias as f64
        })
        .collect())
}

/// `Σ_j z_j d^j + b_dec`.
pub fn decode(z: &LatentVector, w: &SaeWeights) -> Result<Vec<f32>> {
    Ok(decode_wide(z, w)?.into_iter().map(|v| v as f32).collect())
}

/// Reconstruction and error term. The error is taken against the f64
/// reconstruction so that `x = Σ z_j d^j + b_dec + e` holds to the rounding
/// of `e` alone.
pub fn decompose(x: &[f32], w: &SaeWeights) -> Result<Reconstruction> {
    let z = encode(x, w)?;
    let wide = decode_wide(&z, w)?;
    let x_hat = wide.iter().map(|&v| v as f32).collect();
    let error = x
        .iter()
        .zip(&wide)
        .map(|(&a, &b)| (a as f64 - b) as f32)
        .collect();
    Ok(Reconstruction { x_hat, error })
}

/// Column `j` of `W_dec`, as stored (no renormalisation).
pub fn feature_direction(w: &SaeWeights, j: usize) -> Result<Vec<f32>> {
    if j >= w.n() {
        return Err(Error::IndexOutOfRange {
            index: j as u64,
            bound: w.n() as u64,
        });
    }
    let n = w.n();
    Ok((0..w.d()).map(|i| w.w_dec()[i * n + j]).collect())
}

/// Encode a dense FFN-output shard into a sparse latent shard.
pub fn encode_shard(shard: &ActivationShard, w: &SaeWeights) -> Result<ActivationShard> {
    if shard.encoding != ShardEncoding::Dense {
        return Err(Error::KindMismatch(
            "expected a dense FFN-output shard".into(),
        ));
    }
    if shard.layer != w.layer() {
        return Err(Error::LayerMismatch {
            expected: w.layer() as u32,
            found: shard.layer as u32,
        });
    }
    let mut out = ActivationShard::new(
        shard.layer,
        shard.language_id,
        w.n() as u32,
        ShardEncoding::Sparse,
    );
    out.records.reserve(shard.records.len());
    for r in &shard.records {
        out.records.push(encode_record(r, w)?);
    }
    Ok(out)
}

pub(crate) fn encode_record(r: &TokenRecord, w: &SaeWeights) -> Result<TokenRecord> {
    let Values::Dense(x) = &r.values else {
        return Err(Error::KindMismatch("expected a dense record".into()));
    };
    Ok(TokenRecord {
        token_id: r.token_id,
        example_id: r.example_id,
        values: Values::Sparse(encode(x, w)?.entries),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sae(
        d: usize,
        n: usize,
        k: usize,
        w_enc: Vec<f32>,
        b_enc: Vec<f32>,
        w_dec: Vec<f32>,
        b_dec: Vec<f32>,
    ) -> SaeWeights {
        SaeWeights::new(0, d, n, k, w_enc, b_enc, w_dec, b_dec).unwrap()
    }

    const I2: [f32; 4] = [1.0, 0.0, 0.0, 1.0];

    #[test]
    fn relu_kills_negative() {
        let w = sae(
            2,
            2,
            1,
            I2.to_vec(),
            vec![0.0; 2],
            I2.to_vec(),
            vec![0.0; 2],
        );
        let z = encode(&[3.0, -1.0], &w).unwrap();
        assert_eq!(z.entries, vec![(0, 3.0)]);
    }

    #[test]
    fn biases_enter_before_relu() {
        let w = sae(
            2,
            2,
            2,
            I2.to_vec(),
            vec![0.0, -3.0],
            I2.to_vec(),
            vec![1.0, 1.0],
        );
        assert_eq!(pre_activations(&[2.0, 2.0], &w).unwrap(), vec![1.0, -2.0]);
        let z = encode(&[2.0, 2.0], &w).unwrap();
        assert_eq!(z.entries, vec![(0, 1.0)]);
    }

    #[test]
    fn ties_keep_lower_index() {
        let w = sae(
            3,
            3,
            2,
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            vec![0.0; 3],
            vec![0.0; 9],
            vec![0.0; 3],
        );
        let z = encode(&[2.0, 2.0, 2.0], &w).unwrap();
        assert_eq!(z.entries, vec![(0, 2.0), (1, 2.0)]);
    }

    #[test]
    fn decode_bias_only() {
        let w = sae(
            2,
            2,
            1,
            I2.to_vec(),
            vec![0.0; 2],
            I2.to_vec(),
            vec![1.0, 1.0],
        );
        let z = LatentVector {
            dim: 2,
            entries: vec![],
        };
        assert_eq!(decode(&z, &w).unwrap(), vec![1.0, 1.0]);
        let z = LatentVector {
            dim: 2,
            entries: vec![(0, 1.0)],
        };
        assert_eq!(decode(&z, &w).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn decode_rejects_wrong_dim() {
        let w = sae(
            2,
            2,
            1,
            I2.to_vec(),
            vec![0.0; 2],
            I2.to_vec(),
            vec![0.0; 2],
        );
        let z = LatentVector {
            dim: 3,
            entries: vec![],
        };
        assert!(matches!(decode(&z, &w), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn zero_encoder_reconstructs_bias() {
        let b = vec![0.5, -1.5];
        let w = sae(2, 2, 1, vec![0.0; 4], vec![0.0; 2], I2.to_vec(), b.clone());
        let r = decompose(&b, &w).unwrap();
        assert_eq!(r.x_hat, b);
        assert_eq!(r.error, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_error_part() {
        let w = sae(
            2,
            2,
            1,
            I2.to_vec(),
            vec![0.0; 2],
            I2.to_vec(),
            vec![0.0; 2],
        );
        let r = decompose(&[3.0, -1.0], &w).unwrap();
        assert_eq!(r.x_hat, vec![3.0, 0.0]);
        assert_eq!(r.error, vec![0.0, -1.0]);
    }

    #[test]
    fn direction_is_decoder_column() {
        let w = sae(
            2,
            2,
            1,
            I2.to_vec(),
            vec![0.0; 2],
            I2.to_vec(),
            vec![0.0; 2],
        );
        assert_eq!(feature_direction(&w, 1).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(
            feature_direction(&w, 2),
            Err(Error::IndexOutOfRange { index: 2, bound: 2 })
        ));
    }

    #[test]
    fn wrong_input_length() {
        let w = sae(
            2,
            2,
            1,
            I2.to_vec(),
            vec![0.0; 2],
            I2.to_vec(),
            vec![0.0; 2],
        );
        assert!(matches!(encode(&[1.0], &w), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn k_larger_than_positives_keeps_only_positives() {
        assert_eq!(top_k_positive(&[0.0, 2.0, -1.0, 0.0], 3), vec![(1, 2.0)]);
    }
}
