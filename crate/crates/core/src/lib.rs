// SPDX-License-Identifier: MIT OR Apache-2.0

//! # saelang
//!
//! Discovery and use of language-specific units in recorded LLM activations.
//!
//! The crate works on activation dumps rather than live models: FFN outputs,
//! FFN intermediate activations, or sparse-autoencoder latents written to
//! little-endian shard files. On top of those it provides
//!
//! - TopK SAE inference ([`sae`]): encode, decode, reconstruction error,
//!   decoder directions;
//! - activation-probability accumulation and entropy-based selection of
//!   language-specific features and neurons ([`lape`]);
//! - steering plans applied to activation streams ([`steering`]);
//! - count-based and min-max weighted language identification ([`lid`]);
//! - projection of feature directions through the unembedding ([`lens`]);
//! - pairwise feature diagnostics ([`props`]);
//! - synthetic corpora with planted ground truth ([`synth`]);
//! - plot-ready CSV summaries ([`report`]).
//!
//! Binary formats live in [`store`].

#![forbid(unsafe_code)]

pub mod error;
pub mod lape;
pub mod lens;
pub mod lid;
pub mod props;
pub mod report;
pub mod sae;
pub mod steering;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use lape::{
    FeatureProfile, LapeParams, LapeReport, NeuronParams, NeuronReport, ProbabilityTable, UnitKind,
};
pub use lid::{EvalReport, LidModel};
pub use sae::{LatentVector, Reconstruction};
pub use steering::{SteeringEntry, SteeringPlan};
pub use store::{
    ActivationShard, CorpusManifest, FfnDown, SaeWeights, ShardEncoding, TokenRecord, Unembedding,
    Values,
};
pub use synth::{PlantSpec, SynthCorpus};
