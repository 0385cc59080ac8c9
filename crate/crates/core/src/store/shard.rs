// SPDX-License-Identifier: MIT OR Apache-2.0

//! `ACT1` activation shards.
//!
//! ```text
//! header (24 bytes)
//!   magic "ACT1" | version u16 | encoding u8 | reserved u8
//!   layer u16 | language_id u16 | dim u32 | n_records u64
//! dense record
//!   token_id u32 | example_id u32 | dim × f32
//! sparse record
//!   token_id u32 | example_id u32 | nnz u16 | nnz × (index u32, value f32)
//! ```
//!
//! Dense shards carry FFN outputs or FFN intermediate activations; sparse
//! shards carry SAE latents. The file does not distinguish the two dense
//! roles, the caller does.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::codec::{check_magic, check_version, put_f32s, LeReader};
use super::FORMAT_VERSION;
use crate::error::{Error, Result};

pub const SHARD_MAGIC: [u8; 4] = *b"ACT1";
pub const SHARD_HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShardEncoding {
    Dense,
    Sparse,
}

impl ShardEncoding {
    fn to_byte(self) -> u8 {
        match self {
            ShardEncoding::Dense => 0,
            ShardEncoding::Sparse => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(ShardEncoding::Dense),
            1 => Ok(ShardEncoding::Sparse),
            other => Err(Error::InvalidEncoding(other)),
        }
    }
}

/// Activation values of one token.
#[derive(Debug, Clone, PartialEq)]
pub enum Values {
    Dense(Vec<f32>),
    /// `(index, value)` pairs with strictly increasing indices.
    Sparse(Vec<(u32, f32)>),
}

impl Values {
    pub fn encoding(&self) -> ShardEncoding {
        match self {
            Values::Dense(_) => ShardEncoding::Dense,
            Values::Sparse(_) => ShardEncoding::Sparse,
        }
    }

    /// Visit every entry with a strictly positive value, in index order.
    pub fn for_each_active(&self, mut f: impl FnMut(usize, f32)) {
        match self {
            Values::Dense(v) => {
                for (i, &x) in v.iter().enumerate() {
                    if x > 0.0 {
                        f(i, x);
                    }
                }
            }
            Values::Sparse(pairs) => {
                for &(i, x) in pairs {
                    if x > 0.0 {
                        f(i as usize, x);
                    }
                }
            }
        }
    }

    /// Value at `index`, treating absent sparse entries as zero.
    pub fn get(&self, index: usize) -> f32 {
        match self {
            Values::Dense(v) => v.get(index).copied().unwrap_or(0.0),
            Values::Sparse(pairs) => pairs
                .binary_search_by_key(&(index as u64), |&(i, _)| i as u64)
                .map(|p| pairs[p].1)
                .unwrap_or(0.0),
        }
    }

    fn validate(&self, dim: u32) -> Result<()> {
        match self {
            Values::Dense(v) => {
                if v.len() as u64 != dim as u64 {
                    return Err(Error::DimMismatch {
                        context: "dense record",
                        expected: dim as u64,
                        found: v.len() as u64,
                    });
                }
                super::codec::check_finite(v, "dense record")
            }
            Values::Sparse(pairs) => {
                if pairs.len() > u16::MAX as usize {
                    return Err(Error::InvalidParam(format!(
                        "sparse record holds {} entries, format limit is {}",
                        pairs.len(),
                        u16::MAX
                    )));
                }
                validate_sparse(pairs, dim)
            }
        }
    }
}

fn validate_sparse(pairs: &[(u32, f32)], dim: u32) -> Result<()> {
    let mut prev: Option<u32> = None;
    for &(i, v) in pairs {
        if i >= dim {
            return Err(Error::IndexOutOfRange {
                index: i as u64,
                bound: dim as u64,
            });
        }
        if prev.is_some_and(|p| i <= p) {
            return Err(Error::NonMonotoneIndices);
        }
        if !v.is_finite() {
            return Err(Error::NonFiniteValue {
                context: "sparse record",
            });
        }
        prev = Some(i);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenRecord {
    pub token_id: u32,
    pub example_id: u32,
    pub values: Values,
}

/// One layer's activations for tokens of a single language.
///
/// The language id lives in the header, so every record of a shard shares it.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationShard {
    pub layer: u16,
    pub language_id: u16,
    pub dim: u32,
    pub encoding: ShardEncoding,
    pub records: Vec<TokenRecord>,
}

impl ActivationShard {
    pub fn new(layer: u16, language_id: u16, dim: u32, encoding: ShardEncoding) -> Self {
        Self {
            layer,
            language_id,
            dim,
            encoding,
            records: Vec::new(),
        }
    }

    pub fn header(&self) -> ShardHeader {
        ShardHeader {
            encoding: self.encoding,
            layer: self.layer,
            language_id: self.language_id,
            dim: self.dim,
            n_records: self.records.len() as u64,
        }
    }

    /// Check the record invariants the writer relies on.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParam("shard dim must be positive".into()));
        }
        for r in &self.records {
            if r.values.encoding() != self.encoding {
                return Err(Error::KindMismatch(format!(
                    "{:?} record in {:?} shard",
                    r.values.encoding(),
                    self.encoding
                )));
            }
            r.values.validate(self.dim)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardHeader {
    pub encoding: ShardEncoding,
    pub layer: u16,
    pub language_id: u16,
    pub dim: u32,
    pub n_records: u64,
}

impl ShardHeader {
    fn read<R: Read>(r: &mut LeReader<R>) -> Result<Self> {
        check_magic(r.bytes("shard magic")?, SHARD_MAGIC)?;
        check_version(r.u16("shard header")?, "ACT1")?;
        let encoding = ShardEncoding::from_byte(r.u8("shard header")?)?;
        if r.u8("shard header")? != 0 {
            return Err(Error::InvalidParam(
                "ACT1 reserved byte must be zero".into(),
            ));
        }
        let layer = r.u16("shard header")?;
        let language_id = r.u16("shard header")?;
        let dim = r.u32("shard header")?;
        if dim == 0 {
            return Err(Error::InvalidParam("shard dim must be positive".into()));
        }
        let n_records = r.u64("shard header")?;
        Ok(Self {
            encoding,
            layer,
            language_id,
            dim,
            n_records,
        })
    }

    fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let mut buf = [0u8; SHARD_HEADER_LEN];
        buf[0..4].copy_from_slice(&SHARD_MAGIC);
        buf[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf[6] = self.encoding.to_byte();
        buf[7] = 0;
        buf[8..10].copy_from_slice(&self.layer.to_le_bytes());
        buf[10..12].copy_from_slice(&self.language_id.to_le_bytes());
        buf[12..16].copy_from_slice(&self.dim.to_le_bytes());
        buf[16..24].copy_from_slice(&self.n_records.to_le_bytes());
        w.write_all(&buf)
    }
}

/// Streaming decoder yielding records in file order.
///
/// After the last record the iterator checks that the input is exhausted and
/// yields a final `TrailingBytes` error if it is not.
pub struct ShardReader<R> {
    header: ShardHeader,
    remaining: u64,
    reader: LeReader<R>,
    done: bool,
}

impl<R: Read> ShardReader<R> {
    pub fn new(inner: R) -> Result<Self> {
        let mut reader = LeReader::new(inner);
        let header = ShardHeader::read(&mut reader)?;
        Ok(Self {
            header,
            remaining: header.n_records,
            reader,
            done: false,
        })
    }

    pub fn header(&self) -> &ShardHeader {
        &self.header
    }

    fn next_record(&mut self) -> Result<TokenRecord> {
        let token_id = self.reader.u32("record")?;
        let example_id = self.reader.u32("record")?;
        let values = match self.header.encoding {
            ShardEncoding::Dense => {
                Values::Dense(self.reader.f32s(self.header.dim as u64, "dense record")?)
            }
            ShardEncoding::Sparse => {
                let nnz = self.reader.u16("sparse record")?;
                let mut pairs = Vec::with_capacity(nnz as usize);
                for _ in 0..nnz {
                    let index = self.reader.u32("sparse record")?;
                    let value = self.reader.f32("sparse record")?;
                    pairs.push((index, value));
                }
                validate_sparse(&pairs, self.header.dim)?;
                Values::Sparse(pairs)
            }
        };
        Ok(TokenRecord {
            token_id,
            example_id,
            values,
        })
    }
}

impl<R: Read> Iterator for ShardReader<R> {
    type Item = Result<TokenRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        if self.remaining == 0 {
            self.done = true;
            return match self.reader.expect_eof() {
                Ok(()) => None,
                Err(e) => Some(Err(e)),
            };
        }
        self.remaining -= 1;
        let rec = self.next_record();
        if rec.is_err() {
            self.done = true;
        }
        Some(rec)
    }
}

fn collect<R: Read>(inner: R) -> Result<ActivationShard> {
    let reader = ShardReader::new(inner)?;
    let h = *reader.header();
    let mut shard = ActivationShard::new(h.layer, h.language_id, h.dim, h.encoding);
    for rec in reader {
        shard.records.push(rec?);
    }
    Ok(shard)
}

/// Decode a complete shard held in memory.
pub fn decode_shard(bytes: &[u8]) -> Result<ActivationShard> {
    collect(bytes)
}

pub fn read_shard(path: impl AsRef<Path>) -> Result<ActivationShard> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::from(e).at(path))?;
    collect(BufReader::new(file)).map_err(|e| e.at(path))
}

/// Read only the header, e.g. to route a shard by layer and language.
pub fn read_shard_header(path: impl AsRef<Path>) -> Result<ShardHeader> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::from(e).at(path))?;
    ShardReader::new(BufReader::new(file))
        .map(|r| *r.header())
        .map_err(|e| e.at(path))
}

pub fn write_shard_to<W: Write>(shard: &ActivationShard, w: &mut W) -> Result<()> {
    shard.validate()?;
    shard.header().write(w)?;
    for r in &shard.records {
        w.write_all(&r.token_id.to_le_bytes())?;
        w.write_all(&r.example_id.to_le_bytes())?;
        match &r.values {
            Values::Dense(v) => put_f32s(w, v)?,
            Values::Sparse(pairs) => {
                w.write_all(&(pairs.len() as u16).to_le_bytes())?;
                for &(i, v) in pairs {
                    w.write_all(&i.to_le_bytes())?;
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

pub fn encode_shard(shard: &ActivationShard) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_shard_to(shard, &mut out)?;
    Ok(out)
}

pub fn write_shard(shard: &ActivationShard, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    shard.validate().map_err(|e| e.at(path))?;
    let file = File::create(path).map_err(|e| Error::from(e).at(path))?;
    let mut w = BufWriter::new(file);
    write_shard_to(shard, &mut w).map_err(|e| e.at(path))?;
    w.flush().map_err(|e| Error::from(e).at(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(dim: u32, rows: &[&[f32]]) -> ActivationShard {
        let mut s = ActivationShard::new(3, 1, dim, ShardEncoding::Dense);
        for (i, row) in rows.iter().enumerate() {
            s.records.push(TokenRecord {
                token_id: i as u32,
                example_id: 0,
                values: Values::Dense(row.to_vec()),
            });
        }
        s
    }

    #[test]
    fn empty_shard_is_header_only() {
        let s = ActivationShard::new(0, 0, 4, ShardEncoding::Sparse);
        let bytes = encode_shard(&s).unwrap();
        assert_eq!(bytes.len(), SHARD_HEADER_LEN);
        assert_eq!(&bytes[..4], b"ACT1");
        let back = decode_shard(&bytes).unwrap();
        assert!(back.records.is_empty());
        assert_eq!(back, s);
    }

    #[test]
    fn dense_record_decodes_exactly() {
        let s = dense(2, &[&[1.0, -2.0]]);
        let back = decode_shard(&encode_shard(&s).unwrap()).unwrap();
        assert_eq!(back.records[0].values, Values::Dense(vec![1.0, -2.0]));
        assert_eq!(back, s);
    }

    #[test]
    fn header_layout_is_fixed() {
        let s = dense(2, &[&[0.5, 0.25]]);
        let b = encode_shard(&s).unwrap();
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
        assert_eq!(b[6], 0);
        assert_eq!(b[7], 0);
        assert_eq!(u16::from_le_bytes([b[8], b[9]]), 3);
        assert_eq!(u16::from_le_bytes([b[10], b[11]]), 1);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(b[16..24].try_into().unwrap()), 1);
        assert_eq!(b.len(), 24 + 8 + 8);
    }

    #[test]
    fn non_monotone_indices_rejected_on_write() {
        let mut s = ActivationShard::new(0, 0, 8, ShardEncoding::Sparse);
        s.records.push(TokenRecord {
            token_id: 0,
            example_id: 0,
            values: Values::Sparse(vec![(3, 1.0), (1, 1.0)]),
        });
        assert!(matches!(encode_shard(&s), Err(Error::NonMonotoneIndices)));
    }

    #[test]
    fn bad_magic() {
        let mut b = encode_shard(&dense(1, &[])).unwrap();
        b[0] = b'X';
        assert!(matches!(decode_shard(&b), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn truncated_payload() {
        let b = encode_shard(&dense(2, &[&[1.0, 2.0]])).unwrap();
        for cut in [3, 20, b.len() - 1] {
            assert!(
                matches!(decode_shard(&b[..cut]), Err(Error::TruncatedFile { .. })),
                "cut {cut}"
            );
        }
    }

    #[test]
    fn trailing_bytes() {
        let mut b = encode_shard(&dense(2, &[&[1.0, 2.0]])).unwrap();
        b.push(0);
        assert!(matches!(
            decode_shard(&b),
            Err(Error::TrailingBytes { count: 1 })
        ));
    }

    #[test]
    fn nan_rejected_on_read() {
        let mut b = encode_shard(&dense(2, &[&[1.0, 2.0]])).unwrap();
        let at = SHARD_HEADER_LEN + 8;
        b[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode_shard(&b),
            Err(Error::NonFiniteValue { .. })
        ));
    }

    #[test]
    fn sparse_index_out_of_range_on_read() {
        let mut s = ActivationShard::new(0, 0, 8, ShardEncoding::Sparse);
        s.records.push(TokenRecord {
            token_id: 0,
            example_id: 0,
            values: Values::Sparse(vec![(7, 1.0)]),
        });
        let mut b = encode_shard(&s).unwrap();
        // shrink the declared dim below the stored index
        b[12..16].copy_from_slice(&4u32.to_le_bytes());
        assert!(matches!(
            decode_shard(&b),
            Err(Error::IndexOutOfRange { index: 7, bound: 4 })
        ));
    }

    #[test]
    fn forged_record_count_fails_without_allocating() {
        let mut b = encode_shard(&dense(1 << 20, &[])).unwrap();
        b[16..24].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(decode_shard(&b), Err(Error::TruncatedFile { .. })));
    }

    #[test]
    fn streaming_preserves_file_order() {
        let s = dense(1, &[&[1.0], &[2.0], &[3.0]]);
        let bytes = encode_shard(&s).unwrap();
        let got: Vec<u32> = ShardReader::new(&bytes[..])
            .unwrap()
            .map(|r| r.unwrap().token_id)
            .collect();
        assert_eq!(got, vec![0, 1, 2]);
    }

    #[test]
    fn values_get_treats_absent_as_zero() {
        let v = Values::Sparse(vec![(2, 0.5), (9, 1.5)]);
        assert_eq!(v.get(2), 0.5);
        assert_eq!(v.get(3), 0.0);
        assert_eq!(v.get(9), 1.5);
    }
}
