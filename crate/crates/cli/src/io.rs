// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use saelang::store::{read_sae_weights, read_shard};
use saelang::{
    ActivationShard, CorpusManifest, Error, FeatureProfile, ProbabilityTable, Result, SaeWeights,
    ShardEncoding, UnitKind,
};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
    serde_json::from_str(&text).map_err(|e| Error::from(e).at(path))
}

pub fn write_bytes(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Error::from(e).at(p)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

/// `body` serialised as a JSON object with the run configuration under
/// `"config"`.
pub fn json_doc(config: &Value, body: &impl Serialize) -> Result<String> {
    let mut v = serde_json::to_value(body)?;
    let Value::Object(map) = &mut v else {
        return Err(Error::InvalidParam("report body is not an object".into()));
    };
    map.insert("config".into(), config.clone());
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

pub fn write_json(out: Option<&Path>, config: &Value, body: &impl Serialize) -> Result<()> {
    write_bytes(out, json_doc(config, body)?.as_bytes())
}

pub fn load_saes(paths: &[PathBuf]) -> Result<BTreeMap<u16, SaeWeights>> {
    let mut out = BTreeMap::new();
    for p in paths {
        let w = read_sae_weights(p)?;
        if out.insert(w.layer(), w).is_some() {
            return Err(Error::InvalidParam(format!(
                "{}: a second SAE for the same layer",
                p.display()
            )));
        }
    }
    Ok(out)
}

/// A manifest with every shard loaded, in manifest order.
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub shards: Vec<ActivationShard>,
}

impl Corpus {
    pub fn load(path: &Path) -> Result<Self> {
        let manifest = CorpusManifest::load(path)?;
        let listed = manifest.shard_paths();
        let shards = listed
            .par_iter()
            .map(|(lang, p)| {
                let s = read_shard(p)?;
                if s.language_id as usize != *lang {
                    return Err(Error::InvalidManifest(format!(
                        "{} has language id {} but is listed under {:?}",
                        p.display(),
                        s.language_id,
                        manifest.languages[*lang]
                    )));
                }
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest, shards })
    }

    pub fn languages(&self) -> &[String] {
        &self.manifest.languages
    }
}

/// Dense shards of layers with an SAE are replaced by their latent codes.
pub fn latent_shards(
    shards: Vec<ActivationShard>,
    saes: &BTreeMap<u16, SaeWeights>,
) -> Result<Vec<ActivationShard>> {
    shards
        .into_par_iter()
        .map(|s| match (s.encoding, saes.get(&s.layer)) {
            (ShardEncoding::Dense, Some(w)) => saelang::sae::encode_shard(&s, w),
            _ => Ok(s),
        })
        .collect()
}

/// One probability table per layer present in the corpus.
pub fn build_tables(
    corpus: Corpus,
    saes: &BTreeMap<u16, SaeWeights>,
    kind: UnitKind,
) -> Result<Vec<ProbabilityTable>> {
    let n_langs = corpus.manifest.n_langs();
    let mut by_layer: BTreeMap<u16, Vec<ActivationShard>> = BTreeMap::new();
    for s in corpus.shards {
        by_layer.entry(s.layer).or_default().push(s);
    }
    let mut tables = Vec::with_capacity(by_layer.len());
    for (layer, shards) in by_layer {
        let sae = match kind {
            UnitKind::SaeFeature => saes.get(&layer),
            UnitKind::FfnNeuron => None,
        };
        let needs_sae = kind == UnitKind::SaeFeature
            && shards.iter().any(|s| s.encoding == ShardEncoding::Dense);
        let n_units = match (needs_sae, sae) {
            (true, Some(w)) => w.n(),
            (true, None) => {
                return Err(Error::InvalidParam(format!(
                    "layer {layer} has dense shards; pass its SAE with --sae"
                )))
            }
            (false, _) => shards[0].dim as usize,
        };
        tables.push(ProbabilityTable::from_shards(
            layer, kind, n_units, n_langs, &shards, sae,
        )?);
    }
    Ok(tables)
}

/// Tables as written by `--tables-out`.
#[derive(Debug, Serialize, Deserialize)]
pub struct TablesDoc {
    pub languages: Vec<String>,
    pub tables: Vec<ProbabilityTable>,
}

/// Profiles from `lape find` or `lape neurons` output.
#[derive(Debug, Deserialize)]
pub struct ProfileSet {
    pub languages: Vec<String>,
    pub unit_kind: UnitKind,
    #[serde(default)]
    specific: Vec<FeatureProfile>,
    #[serde(default)]
    selected: Vec<FeatureProfile>,
    #[serde(default)]
    shared: BTreeMap<usize, Vec<FeatureProfile>>,
}

impl ProfileSet {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Language-specific features, or the selected neurons.
    pub fn primary(&self) -> Vec<FeatureProfile> {
        self.specific
            .iter()
            .chain(&self.selected)
            .cloned()
            .collect()
    }

    pub fn shared(&self) -> Vec<FeatureProfile> {
        self.shared.values().flatten().cloned().collect()
    }

    pub fn all(&self) -> Vec<FeatureProfile> {
        let mut v = self.primary();
        v.extend(self.shared());
        v.sort_by_key(|p| (p.layer, p.unit));
        v
    }

    pub fn language_index(&self, code: &str) -> Result<usize> {
        self.languages
            .iter()
            .position(|l| l == code)
            .ok_or_else(|| Error::InvalidParam(format!("unknown language {code:?}")))
    }
}

/// Parse `LAYER:INDEX`.
pub fn parse_unit(s: &str) -> Result<(u16, u32)> {
    let bad = || Error::InvalidParam(format!("expected LAYER:INDEX, got {s:?}"));
    let (l, j) = s.split_once(':').ok_or_else(bad)?;
    Ok((
        l.trim().parse().map_err(|_| bad())?,
        j.trim().parse().map_err(|_| bad())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_parsing() {
        assert_eq!(parse_unit("3:17").unwrap(), (3, 17));
        assert!(parse_unit("3").is_err());
        assert!(parse_unit("a:1").is_err());
        assert!(parse_unit("70000:1").is_err());
    }

    #[test]
    fn config_lands_in_the_document() {
        let doc = json_doc(
            &serde_json::json!({"command": "x"}),
            &serde_json::json!({"b": 1, "a": 2}),
        )
        .unwrap();
        assert_eq!(
            doc,
            "{\n  \"a\": 2,\n  \"b\": 1,\n  \"config\": {\n    \"command\": \"x\"\n  }\n}\n"
        );
        assert!(json_doc(&Value::Null, &[1, 2]).is_err());
    }
}
