// SPDX-License-Identifier: MIT OR Apache-2.0

//! Language identification from language-specific units.
//!
//! The score of language `k` counts, over layers and tokens, the active
//! occurrences (`value > 0`) of the units assigned to `k` at that layer.
//! The weighted variant replaces each count by the unit's min-max scaled
//! activation `(z - min) / (max - min + ε)`. The prediction is the arg-max,
//! lowest language index on ties.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lape::{FeatureProfile, ProbabilityTable, UnitKind};
use crate::store::{ActivationShard, TokenRecord, Values};

/// Default ε of the weighted classifier.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidLayer {
    pub layer: u16,
    /// Unit dimension of the layer, used to validate incoming records.
    pub dim: u32,
    /// Sorted unit indices per language.
    pub per_lang_sets: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub epsilon: f64,
    /// `[layer, unit, value]` triples.
    pub min: Vec<(u16, u32, f32)>,
    pub max: Vec<(u16, u32, f32)>,
}

/// JSON: `{unit_kind, languages, layers: [{layer, dim, per_lang_sets}],
/// scaling: {epsilon, min, max}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidModel {
    pub unit_kind: UnitKind,
    pub languages: Vec<String>,
    pub layers: Vec<LidLayer>,
    pub scaling: Scaling,
}

impl LidModel {
    pub fn n_langs(&self) -> usize {
        self.languages.len()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scaling.epsilon > 0.0 && self.scaling.epsilon.is_finite()) {
            return Err(Error::InvalidParam("epsilon must be positive".into()));
        }
        for l in &self.layers {
            if l.per_lang_sets.len() != self.n_langs() {
                return Err(Error::DimMismatch {
                    context: "per-language sets",
                    expected: self.n_langs() as u64,
                    found: l.per_lang_sets.len() as u64,
                });
            }
            for &u in l.per_lang_sets.iter().flatten() {
                if u >= l.dim {
                    return Err(Error::IndexOutOfRange {
                        index: u as u64,
                        bound: l.dim as u64,
                    });
                }
            }
        }
        let max: BTreeMap<(u16, u32), f32> = self
            .scaling
            .max
            .iter()
            .map(|&(l, u, v)| ((l, u), v))
            .collect();
        for &(l, u, lo) in &self.scaling.min {
            if let Some(&hi) = max.get(&(l, u)) {
                if hi < lo {
                    return Err(Error::InvalidParam(format!(
                        "value_max < value_min for ({l}, {u})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Total number of units assigned to each language across layers.
    pub fn set_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_langs()];
        for l in &self.layers {
            for (k, set) in l.per_lang_sets.iter().enumerate() {
                sizes[k] += set.len();
            }
        }
        sizes
    }
}

/// Group profiles into per-layer, per-language unit sets. Scaling maxima
/// come from the tables; minima are 0 for SAE latents and the observed
/// minimum for neurons.
pub fn build_lid_model(
    profiles: &[FeatureProfile],
    tables: &[ProbabilityTable],
    languages: &[String],
    unit_kind: UnitKind,
    epsilon: f64,
) -> Result<LidModel> {
    if profiles.is_empty() {
        return Err(Error::NoFeatures);
    }
    let n_langs = languages.len();
    let by_layer: BTreeMap<u16, &ProbabilityTable> = tables.iter().map(|t| (t.layer, t)).collect();
    let mut sets: BTreeMap<u16, Vec<Vec<u32>>> = BTreeMap::new();
    let mut min = Vec::new();
    let mut max = Vec::new();
    for p in profiles {
        let table = by_layer.get(&p.layer).ok_or_else(|| {
            Error::InvalidParam(format!("no probability table for layer {}", p.layer))
        })?;
        let unit = p.unit as usize;
        if unit >= table.n_units {
            return Err(Error::IndexOutOfRange {
                index: p.unit as u64,
                bound: table.n_units as u64,
            });
        }
        let layer_sets = sets
            .entry(p.layer)
            .or_insert_with(|| vec![Vec::new(); n_langs]);
        for &k in &p.assigned_langs {
            if k >= n_langs {
                return Err(Error::LanguageIdOutOfRange {
                    id: k as u32,
                    n_langs,
                });
            }
            layer_sets[k].push(p.unit);
        }
        let lo = match unit_kind {
            UnitKind::SaeFeature => 0.0,
            UnitKind::FfnNeuron => table.min_activation(unit),
        };
        min.push((p.layer, p.unit, lo));
        max.push((p.layer, p.unit, table.max_activation(unit)));
    }
    min.sort_by_key(|&(l, u, _)| (l, u));
    min.dedup_by_key(|&mut (l, u, _)| (l, u));
    max.sort_by_key(|&(l, u, _)| (l, u));
    max.dedup_by_key(|&mut (l, u, _)| (l, u));
    let layers = sets
        .into_iter()
        .map(|(layer, mut per_lang_sets)| {
            for s in &mut per_lang_sets {
                s.sort_unstable();
                s.dedup();
            }
            LidLayer {
                layer,
                dim: by_layer[&layer].n_units as u32,
                per_lang_sets,
            }
        })
        .collect();
    let model = LidModel {
        unit_kind,
        languages: languages.to_vec(),
        layers,
        scaling: Scaling { epsilon, min, max },
    };
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOptions {
    /// Min-max weighted occurrences instead of counts.
    pub weighted: bool,
    /// Divide each score by the language's total set size.
    pub normalize: bool,
}

struct LayerIndex {
    dim: usize,
    /// unit -> (languages, min, max)
    units: BTreeMap<u32, (Vec<usize>, f64, f64)>,
}

/// Precomputed lookup for scoring many documents against one model.
pub struct LidScorer<'a> {
    model: &'a LidModel,
    layers: BTreeMap<u16, LayerIndex>,
    set_sizes: Vec<usize>,
    options: ScoreOptions,
}

impl<'a> LidScorer<'a> {
    pub fn new(model: &'a LidModel, options: ScoreOptions) -> Self {
        let min: BTreeMap<(u16, u32), f32> = model
            .scaling
            .min
            .iter()
            .map(|&(l, u, v)| ((l, u), v))
            .collect();
        let max: BTreeMap<(u16, u32), f32> = model
            .scaling
            .max
            .iter()
            .map(|&(l, u, v)| ((l, u), v))
            .collect();
        let mut layers = BTreeMap::new();
        for l in &model.layers {
            let mut units: BTreeMap<u32, (Vec<usize>, f64, f64)> = BTreeMap::new();
            for (k, set) in l.per_lang_sets.iter().enumerate() {
                for &u in set {
                    let lo = min.get(&(l.layer, u)).copied().unwrap_or(0.0) as f64;
                    let hi = max.get(&(l.layer, u)).copied().unwrap_or(0.0) as f64;
                    units
                        .entry(u)
                        .or_insert_with(|| (Vec::new(), lo, hi))
                        .0
                        .push(k);
                }
            }
            layers.insert(
                l.layer,
                LayerIndex {
                    dim: l.dim as usize,
                    units,
                },
            );
        }
        Self {
            model,
            layers,
            set_sizes: model.set_sizes(),
            options,
        }
    }

    /// Score a document given as `(layer, token record)` pairs. Layers the
    /// model has no sets for contribute nothing.
    pub fn score<'r>(
        &self,
        records: impl IntoIterator<Item = (u16, &'r TokenRecord)>,
    ) -> Result<Vec<f64>> {
        let eps = self.model.scaling.epsilon;
        let mut scores = vec![0.0f64; self.model.n_langs()];
        for (layer, rec) in records {
            let Some(idx) = self.layers.get(&layer) else {
                continue;
            };
            check_record(&rec.values, idx.dim)?;
            rec.values.for_each_active(|u, z| {
                if let Some((langs, lo, hi)) = idx.units.get(&(u as u32)) {
                    let w = if self.options.weighted {
                        (z as f64 - lo) / (hi - lo + eps)
                    } else {
                        1.0
                    };
                    for &k in langs {
                        scores[k] += w;
                    }
                }
            });
        }
        if self.options.normalize {
            for (s, &n) in scores.iter_mut().zip(&self.set_sizes) {
                if n > 0 {
                    *s /= n as f64;
                }
            }
        }
        Ok(scores)
    }
}

impl LidScorer<'_> {
    /// Score every example of `shards`, pooling records of the same example
    /// id across shards and layers.
    pub fn score_examples(&self, shards: &[ActivationShard]) -> Result<BTreeMap<u32, Vec<f64>>> {
        let mut grouped: BTreeMap<u32, Vec<(u16, &TokenRecord)>> = BTreeMap::new();
        for s in shards {
            for r in &s.records {
                grouped.entry(r.example_id).or_default().push((s.layer, r));
            }
        }
        grouped
            .into_iter()
            .map(|(id, recs)| Ok((id, self.score(recs)?)))
            .collect()
    }
}

fn check_record(values: &Values, dim: usize) -> Result<()> {
    let bad = match values {
        Values::Dense(v) => (v.len() != dim).then_some(v.len()),
        Values::Sparse(p) => p
            .last()
            .filter(|&&(i, _)| i as usize >= dim)
            .map(|&(i, _)| i as usize + 1),
    };
    match bad {
        Some(found) => Err(Error::DimMismatch {
            context: "LID record",
            expected: dim as u64,
            found: found as u64,
        }),
        None => Ok(()),
    }
}

/// One-shot scoring; see [`LidScorer`] for repeated use.
pub fn score_text<'r>(
    records: impl IntoIterator<Item = (u16, &'r TokenRecord)>,
    model: &LidModel,
    options: ScoreOptions,
) -> Result<Vec<f64>> {
    LidScorer::new(model, options).score(records)
}

/// Arg-max, lowest index among ties. `None` for an empty score vector.
pub fn predict(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_language: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub total: u64,
}

/// Harmonic mean, zero when both inputs are zero.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn safe_div(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One-vs-rest precision, recall and F1 per language, their unweighted
/// means, and overall accuracy.
pub fn evaluate(predictions: &[usize], gold: &[usize], n_langs: usize) -> Result<EvalReport> {
    if predictions.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: gold.len(),
        });
    }
    let mut confusion = vec![vec![0u64; n_langs]; n_langs];
    for (&p, &g) in predictions.iter().zip(gold) {
        for l in [p, g] {
            if l >= n_langs {
                return Err(Error::LanguageIdOutOfRange {
                    id: l as u32,
                    n_langs,
                });
            }
        }
        confusion[g][p] += 1;
    }
    let total = gold.len() as u64;
    let per_language: Vec<ClassMetrics> = (0..n_langs)
        .map(|k| {
            let tp = confusion[k][k];
            let predicted: u64 = (0..n_langs).map(|g| confusion[g][k]).sum();
            let support: u64 = confusion[k].iter().sum();
            let precision = safe_div(tp, predicted);
            let recall = safe_div(tp, support);
            ClassMetrics {
                precision,
                recall,
                f1: f1_score(precision, recall),
                support,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if n_langs == 0 {
            0.0
        } else {
            per_language.iter().map(f).sum::<f64>() / n_langs as f64
        }
    };
    let correct: u64 = (0..n_langs).map(|k| confusion[k][k]).sum();
    Ok(EvalReport {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        accuracy: safe_div(correct, total),
        per_language,
        confusion,
        total,
    })
}
