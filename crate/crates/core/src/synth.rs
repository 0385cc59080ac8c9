// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic multilingual activation corpora with planted ground truth.
//!
//! Each language gets its own ChaCha8 stream (seed plus language index as
//! the stream id), so a corpus is reproducible bit for bit and languages can
//! be generated independently. Per token, every unit fires independently:
//!
//! - with `fire_prob_in` if it is planted for the token's language,
//! - with `fire_prob_out` if it is planted for another language,
//! - always if it is listed in `always_active`,
//! - with `background_prob` otherwise.
//!
//! Active values are drawn uniformly from `(0.5, 1.5]` (or fixed at 1 with
//! `binary_values`). Dense modes write inactive units as values in
//! `[-1.5, -0.5)`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lape::FeatureProfile;
use crate::store::{
    write_sae_weights, write_shard, ActivationShard, CorpusManifest, SaeWeights, ShardEncoding,
    TokenRecord, Values,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    /// Sparse SAE latents.
    #[default]
    SaeLatent,
    /// Dense FFN outputs plus an SAE whose encoder recovers the latent
    /// pattern.
    FfnOutput,
    /// Dense FFN intermediate activations (neurons).
    FfnIntermediate,
}

fn default_vocab() -> u32 {
    1000
}

/// Generator settings; the JSON form uses the same field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub n_langs: usize,
    pub n_units: usize,
    /// Planted unit indices per language.
    pub planted: Vec<Vec<u32>>,
    pub fire_prob_in: f64,
    pub fire_prob_out: f64,
    pub background_prob: f64,
    pub tokens_per_example: usize,
    pub examples_per_lang: usize,
    pub seed: u64,
    #[serde(default)]
    pub mode: SynthMode,
    #[serde(default)]
    pub layer: u16,
    /// Language codes; defaults to `l0, l1, ...`.
    #[serde(default)]
    pub languages: Vec<String>,
    /// Units active on every token of every language.
    #[serde(default)]
    pub always_active: Vec<u32>,
    #[serde(default)]
    pub binary_values: bool,
    /// Permit a unit to be planted for several languages.
    #[serde(default)]
    pub allow_overlap: bool,
    #[serde(default = "default_vocab")]
    pub vocab_size: u32,
}

impl PlantSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_langs == 0 || self.n_langs > u16::MAX as usize {
            return bad(format!("n_langs must be in 1..={}", u16::MAX));
        }
        if self.n_units == 0 || self.n_units > u32::MAX as usize {
            return bad("n_units must be positive".into());
        }
        if self.mode == SynthMode::FfnOutput && self.n_units > u16::MAX as usize {
            return bad("ffn_output mode supports at most 65535 units".into());
        }
        for (name, p) in [
            ("fire_prob_in", self.fire_prob_in),
            ("fire_prob_out", self.fire_prob_out),
            ("background_prob", self.background_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if self.planted.len() != self.n_langs {
            return bad(format!(
                "planted has {} lists for {} languages",
                self.planted.len(),
                self.n_langs
            ));
        }
        if !self.languages.is_empty() && self.languages.len() != self.n_langs {
            return bad("languages must list one code per language".into());
        }
        if self.tokens_per_example == 0 {
            return bad("tokens_per_example must be positive".into());
        }
        if (self.n_langs as u64) * (self.examples_per_lang as u64) > u32::MAX as u64 {
            return bad("too many examples for 32-bit example ids".into());
        }
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive".into());
        }
        let mut owner: BTreeMap<u32, usize> = BTreeMap::new();
        for (l, list) in self.planted.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for &u in list {
                if u as usize >= self.n_units {
                    return bad(format!("planted unit {u} >= n_units"));
                }
                if !seen.insert(u) {
                    return bad(format!("unit {u} planted twice for language {l}"));
                }
                if let Some(prev) = owner.insert(u, l) {
                    if !self.allow_overlap {
                        return bad(format!("unit {u} planted for languages {prev} and {l}"));
                    }
                }
            }
        }
        for &u in &self.always_active {
            if u as usize >= self.n_units {
                return bad(format!("always-active unit {u} >= n_units"));
            }
            if owner.contains_key(&u) {
                return bad(format!("unit {u} is both planted and always active"));
            }
        }
        Ok(())
    }

    pub fn language_codes(&self) -> Vec<String> {
        if self.languages.is_empty() {
            (0..self.n_langs).map(|l| format!("l{l}")).collect()
        } else {
            self.languages.clone()
        }
    }

    /// Fire probability of every unit for tokens of language `lang`.
    pub fn unit_probabilities(&self, lang: usize) -> Vec<f64> {
        let mut p = vec![self.background_prob; self.n_units];
        for &u in &self.always_active {
            p[u as usize] = 1.0;
        }
        for (l, list) in self.planted.iter().enumerate() {
            if l == lang {
                continue;
            }
            for &u in list {
                p[u as usize] = self.fire_prob_out;
            }
        }
        for &u in &self.planted[lang] {
            p[u as usize] = self.fire_prob_in;
        }
        p
    }
}

/// Planted `(layer, unit, language)` triples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub layer: u16,
    pub pairs: Vec<(u32, usize)>,
}

impl GroundTruth {
    pub fn from_spec(spec: &PlantSpec) -> Self {
        let mut pairs: Vec<(u32, usize)> = spec
            .planted
            .iter()
            .enumerate()
            .flat_map(|(l, list)| list.iter().map(move |&u| (u, l)))
            .collect();
        pairs.sort_unstable();
        Self {
            layer: spec.layer,
            pairs,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub manifest: CorpusManifest,
    /// One shard per language, in language order.
    pub shards: Vec<ActivationShard>,
    pub ground_truth: GroundTruth,
    /// Present in `ffn_output` mode.
    pub sae: Option<SaeWeights>,
}

impl SynthCorpus {
    pub fn shard_file_name(&self, lang: usize) -> String {
        format!(
            "{}.l{}.act",
            self.manifest.languages[lang], self.ground_truth.layer
        )
    }

    /// Write `manifest.json`, `ground_truth.json`, the shards and, when
    /// present, `sae.l<layer>.bin` into `dir`. Returns the manifest path.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at(dir))?;
        for (l, shard) in self.shards.iter().enumerate() {
            write_shard(shard, dir.join(self.shard_file_name(l)))?;
        }
        if let Some(w) = &self.sae {
            write_sae_weights(w, dir.join(format!("sae.l{}.bin", w.layer())))?;
        }
        let truth = dir.join("ground_truth.json");
        std::fs::write(
            &truth,
            serde_json::to_string_pretty(&self.ground_truth)? + "\n",
        )
        .map_err(|e| Error::from(e).at(&truth))?;
        let manifest = dir.join("manifest.json");
        std::fs::write(&manifest, self.manifest.to_json()? + "\n")
            .map_err(|e| Error::from(e).at(&manifest))?;
        Ok(manifest)
    }
}

/// Latent index `j` reads input coordinate `perm[j]`.
fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        p.swap(i, j);
    }
    p
}

fn permutation_sae(layer: u16, perm: &[usize]) -> Result<SaeWeights> {
    let n = perm.len();
    let mut w_enc = vec![0.0f32; n * n];
    let mut w_dec = vec![0.0f32; n * n];
    for (j, &i) in perm.iter().enumerate() {
        w_enc[j * n + i] = 1.0;
        w_dec[i * n + j] = 1.0;
    }
    SaeWeights::new(layer, n, n, n, w_enc, vec![0.0; n], w_dec, vec![0.0; n])
}

fn generate_language(spec: &PlantSpec, lang: usize, perm: Option<&[usize]>) -> ActivationShard {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(lang as u64);
    let probs = spec.unit_probabilities(lang);
    let encoding = match spec.mode {
        SynthMode::SaeLatent => ShardEncoding::Sparse,
        _ => ShardEncoding::Dense,
    };
    let mut shard = ActivationShard::new(spec.layer, lang as u16, spec.n_units as u32, encoding);
    shard
        .records
        .reserve(spec.examples_per_lang * spec.tokens_per_example);
    let draw_value = |rng: &mut ChaCha8Rng| {
        if spec.binary_values {
            1.0f32
        } else {
            1.5f32 - rng.gen::<f32>()
        }
    };
    for e in 0..spec.examples_per_lang {
        let example_id = (lang * spec.examples_per_lang + e) as u32;
        for _ in 0..spec.tokens_per_example {
            let token_id = rng.gen_range(0..spec.vocab_size);
            let mut pairs = Vec::new();
            let mut dense = vec![
                0.0f32;
                if encoding == ShardEncoding::Dense {
                    spec.n_units
                } else {
                    0
                }
            ];
            for (u, &p) in probs.iter().enumerate() {
                let active = rng.gen::<f64>() < p;
                let v = draw_value(&mut rng);
                match encoding {
                    ShardEncoding::Sparse => {
                        if active {
                            pairs.push((u as u32, v));
                        }
                    }
                    ShardEncoding::Dense => {
                        let slot = perm.map_or(u, |p| p[u]);
                        dense[slot] = if active { v } else { -v };
                    }
                }
            }
            let values = match encoding {
                ShardEncoding::Sparse => Values::Sparse(pairs),
                ShardEncoding::Dense => Values::Dense(dense),
            };
            shard.records.push(TokenRecord {
                token_id,
                example_id,
                values,
            });
        }
    }
    shard
}

/// Generate a corpus. Deterministic in `spec`.
pub fn generate(spec: &PlantSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let perm = (spec.mode == SynthMode::FfnOutput).then(|| permutation(spec.n_units, spec.seed));
    let sae = perm
        .as_deref()
        .map(|p| permutation_sae(spec.layer, p))
        .transpose()?;
    let shards: Vec<ActivationShard> = (0..spec.n_langs)
        .map(|l| generate_language(spec, l, perm.as_deref()))
        .collect();

    let languages = spec.language_codes();
    let mut manifest = CorpusManifest::new(languages.clone());
    for code in &languages {
        manifest.shards.insert(
            code.clone(),
            vec![PathBuf::from(format!("{code}.l{}.act", spec.layer))],
        );
        manifest
            .examples_per_language
            .insert(code.clone(), spec.examples_per_lang as u64);
    }
    manifest.dims.insert(spec.layer, spec.n_units as u32);
    manifest.validate()?;
    Ok(SynthCorpus {
        manifest,
        shards,
        ground_truth: GroundTruth::from_spec(spec),
        sae,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub recovered: usize,
    pub planted: usize,
}

/// Set precision and recall of the language-specific `(unit, language)`
/// pairs among `profiles` against the planted ones. Empty sets score 0.
pub fn verify_recovery(truth: &GroundTruth, profiles: &[FeatureProfile]) -> Recovery {
    let planted: BTreeSet<(u32, usize)> = truth.pairs.iter().copied().collect();
    let recovered: BTreeSet<(u32, usize)> = profiles
        .iter()
        .filter(|p| p.layer == truth.layer)
        .filter_map(|p| p.specific_language().map(|l| (p.unit, l)))
        .collect();
    let tp = planted.intersection(&recovered).count();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Recovery {
        precision: ratio(tp, recovered.len()),
        recall: ratio(tp, planted.len()),
        true_positives: tp,
        recovered: recovered.len(),
        planted: planted.len(),
    }
}
