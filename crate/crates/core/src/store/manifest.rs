// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::shard::read_shard_header;
use crate::error::{Error, Result};

/// JSON description of a multilingual activation corpus.
///
/// ```json
/// {
///   "languages": ["en", "de"],
///   "shards": {"en": ["en.l3.act"], "de": ["de.l3.act"]},
///   "examples_per_language": {"en": 1000, "de": 1000},
///   "dims": {"3": 2048}
/// }
/// ```
///
/// The order of `languages` is the canonical language index used in shard
/// headers and every downstream report. Relative shard paths resolve
/// against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub languages: Vec<String>,
    #[serde(default)]
    pub shards: BTreeMap<String, Vec<PathBuf>>,
    #[serde(default)]
    pub examples_per_language: BTreeMap<String, u64>,
    #[serde(default)]
    pub dims: BTreeMap<u16, u32>,
    #[serde(skip)]
    base_dir: Option<PathBuf>,
}

impl CorpusManifest {
    pub fn new(languages: Vec<String>) -> Self {
        Self {
            languages,
            shards: BTreeMap::new(),
            examples_per_language: BTreeMap::new(),
            dims: BTreeMap::new(),
            base_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
        let mut m = Self::from_json(&text).map_err(|e| e.at(path))?;
        m.base_dir = path.parent().map(Path::to_path_buf);
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Structural checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        if self.languages.is_empty() {
            return Err(Error::InvalidManifest("no languages".into()));
        }
        if self.languages.len() > u16::MAX as usize + 1 {
            return Err(Error::InvalidManifest("too many languages".into()));
        }
        let mut seen = BTreeSet::new();
        for l in &self.languages {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidManifest(format!("duplicate language {l:?}")));
            }
        }
        for key in self.shards.keys().chain(self.examples_per_language.keys()) {
            if !seen.contains(key.as_str()) {
                return Err(Error::InvalidManifest(format!("unknown language {key:?}")));
            }
        }
        if let Some((layer, _)) = self.dims.iter().find(|(_, &d)| d == 0) {
            return Err(Error::InvalidManifest(format!("layer {layer} has dim 0")));
        }
        Ok(())
    }

    pub fn n_langs(&self) -> usize {
        self.languages.len()
    }

    pub fn language_index(&self, code: &str) -> Option<usize> {
        self.languages.iter().position(|l| l == code)
    }

    /// Every shard as `(language index, resolved path)`, in language order
    /// then listing order.
    pub fn shard_paths(&self) -> Vec<(usize, PathBuf)> {
        let mut out = Vec::new();
        for (idx, lang) in self.languages.iter().enumerate() {
            for p in self.shards.get(lang).into_iter().flatten() {
                out.push((idx, self.resolve(p)));
            }
        }
        out
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn set_base_dir(&mut self, dir: impl Into<PathBuf>) {
        self.base_dir = Some(dir.into());
    }

    /// Read every shard header and check it against the manifest: language id
    /// must match the listing language, and dim must match `dims` when the
    /// layer is declared there.
    pub fn check_shards(&self) -> Result<()> {
        for (lang, path) in self.shard_paths() {
            let h = read_shard_header(&path)?;
            if h.language_id as usize != lang {
                return Err(Error::InvalidManifest(format!(
                    "{} has language id {} but is listed under {:?}",
                    path.display(),
                    h.language_id,
                    self.languages[lang]
                )));
            }
            if let Some(&d) = self.dims.get(&h.layer) {
                if d != h.dim {
                    return Err(Error::DimMismatch {
                        context: "manifest dims",
                        expected: d as u64,
                        found: h.dim as u64,
                    }
                    .at(path));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_orders_languages() {
        let m = CorpusManifest::from_json(
            r#"{"languages":["en","de"],"shards":{"de":["b.act"],"en":["a.act"]},
                "examples_per_language":{"en":3},"dims":{"3":16}}"#,
        )
        .unwrap();
        assert_eq!(m.language_index("de"), Some(1));
        let paths = m.shard_paths();
        assert_eq!(paths[0], (0, PathBuf::from("a.act")));
        assert_eq!(paths[1], (1, PathBuf::from("b.act")));
        assert_eq!(m.dims[&3], 16);
    }

    #[test]
    fn duplicate_language_rejected() {
        let err = CorpusManifest::from_json(r#"{"languages":["en","en"]}"#);
        assert!(matches!(err, Err(Error::InvalidManifest(_))));
    }

    #[test]
    fn unknown_shard_language_rejected() {
        let err = CorpusManifest::from_json(r#"{"languages":["en"],"shards":{"fr":[]}}"#);
        assert!(matches!(err, Err(Error::InvalidManifest(_))));
    }

    #[test]
    fn header_language_must_match_listing() {
        use crate::store::{write_shard, ActivationShard, ShardEncoding};
        let dir = tempfile::tempdir().unwrap();
        write_shard(
            &ActivationShard::new(0, 1, 4, ShardEncoding::Sparse),
            dir.path().join("x.act"),
        )
        .unwrap();
        let mut m =
            CorpusManifest::from_json(r#"{"languages":["en","de"],"shards":{"en":["x.act"]}}"#)
                .unwrap();
        m.set_base_dir(dir.path());
        assert!(m.check_shards().is_err());
        m.shards.clear();
        m.shards.insert("de".into(), vec!["x.act".into()]);
        m.check_shards().unwrap();
    }
}
