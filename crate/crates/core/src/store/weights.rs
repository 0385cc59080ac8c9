// SPDX-License-Identifier: MIT OR Apache-2.0

//! Weight files: `SAE1`, `UNB1` and `FFN1`.
//!
//! ```text
//! SAE1: magic | version u16 | layer u16 | d u32 | n u32 | k u16 | reserved u16
//!       | W_enc (n·d) | b_enc (n) | W_dec (d·n) | b_dec (d)
//! UNB1: magic | version u16 | reserved u16 | vocab u32 | d u32
//!       | W_U (vocab·d) | vocab × (len u16, UTF-8 bytes)
//! FFN1: magic | version u16 | layer u16 | d u32 | m u32 | W_2 (d·m)
//! ```
//!
//! Matrices are row-major f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::codec::{check_finite, check_magic, check_version, put_f32s, LeReader};
use super::FORMAT_VERSION;
use crate::error::{Error, Result};

pub const SAE_MAGIC: [u8; 4] = *b"SAE1";
pub const UNB_MAGIC: [u8; 4] = *b"UNB1";
pub const FFN_MAGIC: [u8; 4] = *b"FFN1";

fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimMismatch {
            context,
            expected: expected as u64,
            found: found as u64,
        });
    }
    Ok(())
}

fn product(a: u32, b: u32) -> u64 {
    a as u64 * b as u64
}

/// TopK sparse autoencoder for one layer.
///
/// `w_enc` is `n × d` and `w_dec` is `d × n`, both row-major; column `j` of
/// `w_dec` is the direction of feature `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeWeights {
    layer: u16,
    d: usize,
    n: usize,
    k: usize,
    w_enc: Vec<f32>,
    b_enc: Vec<f32>,
    w_dec: Vec<f32>,
    b_dec: Vec<f32>,
}

impl SaeWeights {
    /// Sparsity budget used by the reference SAEs.
    pub const DEFAULT_K: usize = 32;
    /// Latent width is `EXPANSION × d` for the reference SAEs.
    pub const EXPANSION: usize = 64;

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        layer: u16,
        d: usize,
        n: usize,
        k: usize,
        w_enc: Vec<f32>,
        b_enc: Vec<f32>,
        w_dec: Vec<f32>,
        b_dec: Vec<f32>,
    ) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::InvalidParam("SAE dims must be positive".into()));
        }
        if k == 0 || k > n || k > u16::MAX as usize {
            return Err(Error::InvalidSparsity {
                k: k as u64,
                n: n as u64,
            });
        }
        check_len("W_enc", n * d, w_enc.len())?;
        check_len("b_enc", n, b_enc.len())?;
        check_len("W_dec", d * n, w_dec.len())?;
        check_len("b_dec", d, b_dec.len())?;
        check_finite(&w_enc, "W_enc")?;
        check_finite(&b_enc, "b_enc")?;
        check_finite(&w_dec, "W_dec")?;
        check_finite(&b_dec, "b_dec")?;
        Ok(Self {
            layer,
            d,
            n,
            k,
            w_enc,
            b_enc,
            w_dec,
            b_dec,
        })
    }

    pub fn layer(&self) -> u16 {
        self.layer
    }
    /// Input (model) dimension.
    pub fn d(&self) -> usize {
        self.d
    }
    /// Latent dimension.
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn w_enc(&self) -> &[f32] {
        &self.w_enc
    }
    pub fn b_enc(&self) -> &[f32] {
        &self.b_enc
    }
    pub fn w_dec(&self) -> &[f32] {
        &self.w_dec
    }
    pub fn b_dec(&self) -> &[f32] {
        &self.b_dec
    }

    /// Row `j` of the encoder.
    pub fn encoder_row(&self, j: usize) -> &[f32] {
        &self.w_enc[j * self.d..(j + 1) * self.d]
    }
}

pub fn encode_sae_weights(w: &SaeWeights) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * (2 * w.n * w.d + w.n + w.d));
    out.extend_from_slice(&SAE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&w.layer.to_le_bytes());
    out.extend_from_slice(&(w.d as u32).to_le_bytes());
    out.extend_from_slice(&(w.n as u32).to_le_bytes());
    out.extend_from_slice(&(w.k as u16).to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    // writes into a Vec cannot fail
    for part in [&w.w_enc, &w.b_enc, &w.w_dec, &w.b_dec] {
        put_f32s(&mut out, part).expect("in-memory write");
    }
    out
}

fn read_sae<R: Read>(inner: R) -> Result<SaeWeights> {
    let mut r = LeReader::new(inner);
    check_magic(r.bytes("SAE1 magic")?, SAE_MAGIC)?;
    check_version(r.u16("SAE1 header")?, "SAE1")?;
    let layer = r.u16("SAE1 header")?;
    let d = r.u32("SAE1 header")?;
    let n = r.u32("SAE1 header")?;
    let k = r.u16("SAE1 header")?;
    if r.u16("SAE1 header")? != 0 {
        return Err(Error::InvalidParam(
            "SAE1 reserved field must be zero".into(),
        ));
    }
    if d == 0 || n == 0 {
        return Err(Error::InvalidParam("SAE dims must be positive".into()));
    }
    if k == 0 || k as u32 > n {
        return Err(Error::InvalidSparsity {
            k: k as u64,
            n: n as u64,
        });
    }
    let w_enc = r.f32s(product(n, d), "W_enc")?;
    let b_enc = r.f32s(n as u64, "b_enc")?;
    let w_dec = r.f32s(product(d, n), "W_dec")?;
    let b_dec = r.f32s(d as u64, "b_dec")?;
    r.expect_eof()?;
    SaeWeights::new(
        layer, d as usize, n as usize, k as usize, w_enc, b_enc, w_dec, b_dec,
    )
}

pub fn decode_sae_weights(bytes: &[u8]) -> Result<SaeWeights> {
    read_sae(bytes)
}

pub fn read_sae_weights(path: impl AsRef<Path>) -> Result<SaeWeights> {
    read_file(path.as_ref(), read_sae)
}

pub fn write_sae_weights(w: &SaeWeights, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_sae_weights(w))
}

/// Token unembedding `W_U` (`vocab × d`, row-major) with the token strings.
#[derive(Debug, Clone, PartialEq)]
pub struct Unembedding {
    d: usize,
    w_u: Vec<f32>,
    tokens: Vec<String>,
}

impl Unembedding {
    pub fn new(d: usize, w_u: Vec<f32>, tokens: Vec<String>) -> Result<Self> {
        if d == 0 || tokens.is_empty() {
            return Err(Error::InvalidParam(
                "unembedding needs d > 0 and a non-empty vocabulary".into(),
            ));
        }
        check_len("W_U", tokens.len() * d, w_u.len())?;
        check_finite(&w_u, "W_U")?;
        if let Some(t) = tokens.iter().find(|t| t.len() > u16::MAX as usize) {
            return Err(Error::InvalidParam(format!(
                "token of {} bytes exceeds the u16 length prefix",
                t.len()
            )));
        }
        Ok(Self { d, w_u, tokens })
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn vocab(&self) -> usize {
        self.tokens.len()
    }
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
    pub fn w_u(&self) -> &[f32] {
        &self.w_u
    }
    pub fn row(&self, token: usize) -> &[f32] {
        &self.w_u[token * self.d..(token + 1) * self.d]
    }
}

pub fn encode_unembedding(u: &Unembedding) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&UNB_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(u.vocab() as u32).to_le_bytes());
    out.extend_from_slice(&(u.d as u32).to_le_bytes());
    put_f32s(&mut out, &u.w_u).expect("in-memory write");
    for t in &u.tokens {
        out.extend_from_slice(&(t.len() as u16).to_le_bytes());
        out.extend_from_slice(t.as_bytes());
    }
    out
}

fn read_unb<R: Read>(inner: R) -> Result<Unembedding> {
    let mut r = LeReader::new(inner);
    check_magic(r.bytes("UNB1 magic")?, UNB_MAGIC)?;
    check_version(r.u16("UNB1 header")?, "UNB1")?;
    if r.u16("UNB1 header")? != 0 {
        return Err(Error::InvalidParam(
            "UNB1 reserved field must be zero".into(),
        ));
    }
    let vocab = r.u32("UNB1 header")?;
    let d = r.u32("UNB1 header")?;
    if vocab == 0 || d == 0 {
        return Err(Error::InvalidParam(
            "unembedding needs d > 0 and a non-empty vocabulary".into(),
        ));
    }
    let w_u = r.f32s(product(vocab, d), "W_U")?;
    let mut tokens = Vec::with_capacity(vocab as usize);
    for i in 0..vocab {
        let len = r.u16("token table")?;
        let raw = r.raw(len as usize, "token table")?;
        let s = String::from_utf8(raw)
            .map_err(|_| Error::InvalidParam(format!("token {i} is not valid UTF-8")))?;
        tokens.push(s);
    }
    r.expect_eof()?;
    Unembedding::new(d as usize, w_u, tokens)
}

pub fn decode_unembedding(bytes: &[u8]) -> Result<Unembedding> {
    read_unb(bytes)
}

pub fn read_unembedding(path: impl AsRef<Path>) -> Result<Unembedding> {
    read_file(path.as_ref(), read_unb)
}

pub fn write_unembedding(u: &Unembedding, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_unembedding(u))
}

/// FFN down-projection `W_2` (`d × m`, row-major). Column `j` is the output
/// direction written by intermediate neuron `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnDown {
    layer: u16,
    d: usize,
    m: usize,
    w: Vec<f32>,
}

impl FfnDown {
    pub fn new(layer: u16, d: usize, m: usize, w: Vec<f32>) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::InvalidParam("FFN dims must be positive".into()));
        }
        check_len("W_2", d * m, w.len())?;
        check_finite(&w, "W_2")?;
        Ok(Self { layer, d, m, w })
    }

    pub fn layer(&self) -> u16 {
        self.layer
    }
    pub fn d(&self) -> usize {
        self.d
    }
    /// Number of intermediate neurons.
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn matrix(&self) -> &[f32] {
        &self.w
    }

    pub fn column(&self, j: usize) -> Result<Vec<f32>> {
        if j >= self.m {
            return Err(Error::IndexOutOfRange {
                index: j as u64,
                bound: self.m as u64,
            });
        }
        Ok((0..self.d).map(|i| self.w[i * self.m + j]).collect())
    }
}

pub fn encode_ffn_down(f: &FfnDown) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * f.w.len());
    out.extend_from_slice(&FFN_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&f.layer.to_le_bytes());
    out.extend_from_slice(&(f.d as u32).to_le_bytes());
    out.extend_from_slice(&(f.m as u32).to_le_bytes());
    put_f32s(&mut out, &f.w).expect("in-memory write");
    out
}

fn read_ffn<R: Read>(inner: R) -> Result<FfnDown> {
    let mut r = LeReader::new(inner);
    check_magic(r.bytes("FFN1 magic")?, FFN_MAGIC)?;
    check_version(r.u16("FFN1 header")?, "FFN1")?;
    let layer = r.u16("FFN1 header")?;
    let d = r.u32("FFN1 header")?;
    let m = r.u32("FFN1 header")?;
    if d == 0 || m == 0 {
        return Err(Error::InvalidParam("FFN dims must be positive".into()));
    }
    let w = r.f32s(product(d, m), "W_2")?;
    r.expect_eof()?;
    FfnDown::new(layer, d as usize, m as usize, w)
}

pub fn decode_ffn_down(bytes: &[u8]) -> Result<FfnDown> {
    read_ffn(bytes)
}

pub fn read_ffn_down(path: impl AsRef<Path>) -> Result<FfnDown> {
    read_file(path.as_ref(), read_ffn)
}

pub fn write_ffn_down(f: &FfnDown, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_ffn_down(f))
}

fn read_file<T>(path: &Path, decode: fn(BufReader<File>) -> Result<T>) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::from(e).at(path))?;
    decode(BufReader::new(file)).map_err(|e| e.at(path))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::from(e).at(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::from(e).at(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_sae() -> SaeWeights {
        SaeWeights::new(
            0,
            2,
            2,
            1,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
        )
        .unwrap()
    }

    #[test]
    fn identity_encoder_reads_back() {
        let w = identity_sae();
        let back = decode_sae_weights(&encode_sae_weights(&w)).unwrap();
        assert_eq!(back.w_enc(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(back, w);
    }

    #[test]
    fn short_payload_is_truncated() {
        let mut w = SaeWeights::new(
            1,
            4,
            2,
            1,
            vec![0.5; 8],
            vec![0.0; 2],
            vec![0.5; 8],
            vec![0.0; 4],
        )
        .unwrap();
        let bytes = encode_sae_weights(&w);
        assert!(matches!(
            decode_sae_weights(&bytes[..bytes.len() - 4]),
            Err(Error::TruncatedFile { .. })
        ));
        w = identity_sae();
        let bytes = encode_sae_weights(&w);
        assert!(matches!(
            decode_sae_weights(&bytes[..10]),
            Err(Error::TruncatedFile { .. })
        ));
    }

    #[test]
    fn k_outside_range_rejected() {
        let mut bytes = encode_sae_weights(&identity_sae());
        bytes[16..18].copy_from_slice(&3u16.to_le_bytes());
        assert!(matches!(
            decode_sae_weights(&bytes),
            Err(Error::InvalidSparsity { k: 3, n: 2 })
        ));
        bytes[16..18].copy_from_slice(&0u16.to_le_bytes());
        assert!(decode_sae_weights(&bytes).is_err());
    }

    #[test]
    fn constructor_checks_lengths() {
        let err = SaeWeights::new(
            0,
            2,
            2,
            1,
            vec![0.0; 3],
            vec![0.0; 2],
            vec![0.0; 4],
            vec![0.0; 2],
        );
        assert!(matches!(err, Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn inf_in_weights_rejected() {
        let mut bytes = encode_sae_weights(&identity_sae());
        bytes[20..24].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(
            decode_sae_weights(&bytes),
            Err(Error::NonFiniteValue { .. })
        ));
    }

    #[test]
    fn wrong_magic_for_format() {
        let bytes = encode_sae_weights(&identity_sae());
        assert!(matches!(
            decode_ffn_down(&bytes),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn unembedding_round_trip_with_multibyte_tokens() {
        let u = Unembedding::new(
            2,
            vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5],
            vec!["the".into(), "ĠDer".into(), "日本".into()],
        )
        .unwrap();
        let bytes = encode_unembedding(&u);
        assert_eq!(decode_unembedding(&bytes).unwrap(), u);
    }

    #[test]
    fn invalid_utf8_token_rejected() {
        let u = Unembedding::new(1, vec![1.0], vec!["ab".into()]).unwrap();
        let mut bytes = encode_unembedding(&u);
        let n = bytes.len();
        bytes[n - 1] = 0xff;
        assert!(decode_unembedding(&bytes).is_err());
    }

    #[test]
    fn ffn_column_extraction() {
        // 2 x 3, row-major
        let f = FfnDown::new(4, 2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(f.column(1).unwrap(), vec![2.0, 5.0]);
        assert!(matches!(f.column(3), Err(Error::IndexOutOfRange { .. })));
        assert_eq!(decode_ffn_down(&encode_ffn_down(&f)).unwrap(), f);
    }
}
