// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every module.

use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported {format} version {version}")]
    UnsupportedVersion { format: &'static str, version: u16 },

    #[error("truncated file while reading {context}")]
    TruncatedFile { context: &'static str },

    #[error("{count} unexpected trailing bytes after payload")]
    TrailingBytes { count: u64 },

    #[error("non-finite value in {context}")]
    NonFiniteValue { context: &'static str },

    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: u64, bound: u64 },

    #[error("sparse indices are not strictly increasing")]
    NonMonotoneIndices,

    #[error("invalid shard encoding byte {0}")]
    InvalidEncoding(u8),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimMismatch {
        context: &'static str,
        expected: u64,
        found: u64,
    },

    #[error("sparsity budget k={k} outside 1..={n}")]
    InvalidSparsity { k: u64, n: u64 },

    #[error("layer mismatch: expected {expected}, found {found}")]
    LayerMismatch { expected: u32, found: u32 },

    #[error("language id {id} out of range for {n_langs} languages")]
    LanguageIdOutOfRange { id: u32, n_langs: usize },

    #[error("shard kind does not fit this operation: {0}")]
    KindMismatch(String),

    #[error("probability vector sums to zero")]
    ZeroVector,

    #[error("vector has zero norm")]
    ZeroNorm,

    #[error("series is constant")]
    ConstantSeries,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty probability table")]
    EmptyTable,

    #[error("no features assigned to language {0}")]
    NoFeaturesForLanguage(usize),

    #[error("no features to build a model from")]
    NoFeatures,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach a file path to an error raised while reading or writing it.
    pub fn at(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// Short machine-readable name of the variant, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::BadMagic { .. } => "BadMagic",
            Error::UnsupportedVersion { .. } => "UnsupportedVersion",
            Error::TruncatedFile { .. } => "TruncatedFile",
            Error::TrailingBytes { .. } => "TrailingBytes",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::NonMonotoneIndices => "NonMonotoneIndices",
            Error::InvalidEncoding(_) => "InvalidEncoding",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::InvalidSparsity { .. } => "InvalidSparsity",
            Error::LayerMismatch { .. } => "LayerMismatch",
            Error::LanguageIdOutOfRange { .. } => "LanguageIdOutOfRange",
            Error::KindMismatch(_) => "KindMismatch",
            Error::ZeroVector => "ZeroVector",
            Error::ZeroNorm => "ZeroNorm",
            Error::ConstantSeries => "ConstantSeries",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::EmptyTable => "EmptyTable",
            Error::NoFeaturesForLanguage(_) => "NoFeaturesForLanguage",
            Error::NoFeatures => "NoFeatures",
            Error::InvalidParam(_) => "InvalidParam",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::InvalidManifest(_) => "InvalidManifest",
            Error::File { source, .. } => source.kind(),
            Error::Io(_) => "IoFailure",
            Error::Json(_) => "Json",
        }
    }
}
