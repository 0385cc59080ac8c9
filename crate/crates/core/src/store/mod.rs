// SPDX-License-Identifier: MIT OR Apache-2.0

//! On-disk formats.
//!
//! Everything is little-endian with 32-bit IEEE-754 payloads:
//!
//! | magic  | contents                                   |
//! |--------|--------------------------------------------|
//! | `ACT1` | activation shard, dense or sparse records  |
//! | `SAE1` | TopK SAE weights for one layer             |
//! | `UNB1` | unembedding matrix plus token strings      |
//! | `FFN1` | FFN down-projection for one layer          |
//!
//! The corpus manifest tying shards to languages is JSON.
//!
//! Readers reject NaN/Inf payloads, truncated files and trailing bytes, so a
//! successful read followed by a write reproduces the input byte for byte.

mod codec;
mod manifest;
mod shard;
mod weights;

pub use manifest::CorpusManifest;
pub use shard::{
    decode_shard, encode_shard, read_shard, read_shard_header, write_shard, write_shard_to,
    ActivationShard, ShardEncoding, ShardHeader, ShardReader, TokenRecord, Values,
    SHARD_HEADER_LEN, SHARD_MAGIC,
};
pub use weights::{
    decode_ffn_down, decode_sae_weights, decode_unembedding, encode_ffn_down, encode_sae_weights,
    encode_unembedding, read_ffn_down, read_sae_weights, read_unembedding, write_ffn_down,
    write_sae_weights, write_unembedding, FfnDown, SaeWeights, Unembedding, FFN_MAGIC, SAE_MAGIC,
    UNB_MAGIC,
};

/// Format version written by this crate and the only one accepted on read.
pub const FORMAT_VERSION: u16 = 1;
