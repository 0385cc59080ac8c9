// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    classify_feature, entropy_of_normalized, l1_normalize, FeatureProfile, LapeParams,
    ProbabilityTable, UnitKind,
};
use crate::error::{Error, Result};

/// Output of [`find_language_specific`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LapeReport {
    pub n_langs: usize,
    /// Language-specific profiles sorted by `(layer, unit)`.
    pub specific: Vec<FeatureProfile>,
    /// Language-shared profiles keyed by the number of assigned languages.
    pub shared: BTreeMap<usize, Vec<FeatureProfile>>,
    /// Units with a non-zero probability vector.
    pub evaluated: usize,
    /// Units never active in any language.
    pub skipped: usize,
}

impl LapeReport {
    pub fn specific_for(&self, lang: usize) -> impl Iterator<Item = &FeatureProfile> {
        self.specific
            .iter()
            .filter(move |p| p.specific_language() == Some(lang))
    }

    pub fn shared_profiles(&self) -> impl Iterator<Item = &FeatureProfile> {
        self.shared.values().flatten()
    }
}

fn profile(table: &ProbabilityTable, unit: usize, p: Vec<f64>) -> FeatureProfile {
    FeatureProfile {
        layer: table.layer,
        unit: unit as u32,
        p,
        p_norm: Vec::new(),
        lape: 0.0,
        assigned_langs: Vec::new(),
        hfl_pass: false,
        max_activation: table.max_activation(unit),
    }
}

/// Run the frequency filters and T-of-max assignment over every unit of
/// every table.
pub fn find_language_specific(
    tables: &[ProbabilityTable],
    params: &LapeParams,
) -> Result<LapeReport> {
    params.validate()?;
    let mut report = LapeReport {
        n_langs: tables.first().map_or(0, |t| t.n_langs),
        ..LapeReport::default()
    };
    let mut order: Vec<&ProbabilityTable> = tables.iter().collect();
    order.sort_by_key(|t| t.layer);
    for table in order {
        if table.n_langs != report.n_langs {
            return Err(Error::DimMismatch {
                context: "table languages",
                expected: report.n_langs as u64,
                found: table.n_langs as u64,
            });
        }
        for unit in 0..table.n_units {
            let p = table.probabilities(unit);
            if p.iter().all(|&v| v == 0.0) {
                report.skipped += 1;
                continue;
            }
            report.evaluated += 1;
            let c = classify_feature(&p, &p, &table.example_fractions(unit), params)?;
            if !c.hfl_pass || c.assigned_langs.is_empty() {
                continue;
            }
            let mut prof = profile(table, unit, p);
            prof.p_norm = c.p_norm;
            prof.lape = c.lape;
            prof.hfl_pass = true;
            prof.assigned_langs = c.assigned_langs;
            if prof.is_specific() {
                report.specific.push(prof);
            } else {
                report
                    .shared
                    .entry(prof.assigned_langs.len())
                    .or_default()
                    .push(prof);
            }
        }
    }
    Ok(report)
}

/// Neuron selection settings. Defaults: 95th percentile, bottom 1%.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    pub percentile: f64,
    pub bottom_frac: f64,
}

impl Default for NeuronParams {
    fn default() -> Self {
        Self {
            percentile: 95.0,
            bottom_frac: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronReport {
    pub n_langs: usize,
    /// Probability cut from the nearest-rank percentile.
    pub threshold: f64,
    /// Neurons across all tables.
    pub total_neurons: usize,
    /// Neurons with at least one probability at or above the threshold.
    pub survivors: usize,
    /// Selected neurons in ascending LAPE order.
    pub selected: Vec<FeatureProfile>,
}

/// Nearest-rank percentile of `values`: the smallest value with at least
/// `pct` percent of the data at or below it.
pub fn nearest_rank_percentile(values: &mut [f64], pct: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyTable);
    }
    if !(pct > 0.0 && pct <= 100.0) {
        return Err(Error::InvalidParam(format!(
            "percentile must be in (0, 100], got {pct}"
        )));
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let exact = pct * n as f64 / 100.0;
    // keep integral ranks integral despite rounding in the product
    let rank = if (exact - exact.round()).abs() < 1e-9 {
        exact.round()
    } else {
        exact.ceil()
    } as usize;
    Ok(values[rank.clamp(1, n) - 1])
}

/// Percentile-thresholded LAPE over FFN neurons, keeping the lowest-entropy
/// `bottom_frac` of all neurons. A kept neuron is assigned to every language
/// whose probability survives the threshold.
pub fn find_language_specific_neurons(
    tables: &[ProbabilityTable],
    params: &NeuronParams,
) -> Result<NeuronReport> {
    if !(0.0..=1.0).contains(&params.bottom_frac) {
        return Err(Error::InvalidParam(format!(
            "bottom fraction must be in [0, 1], got {}",
            params.bottom_frac
        )));
    }
    if let Some(t) = tables.iter().find(|t| t.unit_kind != UnitKind::FfnNeuron) {
        return Err(Error::KindMismatch(format!(
            "layer {} holds SAE features, expected FFN neurons",
            t.layer
        )));
    }
    let n_langs = tables.first().map_or(0, |t| t.n_langs);
    if tables.iter().any(|t| t.n_langs != n_langs) {
        return Err(Error::DimMismatch {
            context: "table languages",
            expected: n_langs as u64,
            found: 0,
        });
    }
    let mut order: Vec<&ProbabilityTable> = tables.iter().collect();
    order.sort_by_key(|t| t.layer);

    let probs: Vec<(&ProbabilityTable, usize, Vec<f64>)> = order
        .iter()
        .flat_map(|t| (0..t.n_units).map(move |u| (*t, u, t.probabilities(u))))
        .collect();
    let mut all: Vec<f64> = probs
        .iter()
        .flat_map(|(_, _, p)| p.iter().copied())
        .collect();
    let threshold = nearest_rank_percentile(&mut all, params.percentile)?;
    let total_neurons = probs.len();

    let mut candidates = Vec::new();
    for (table, unit, p) in probs {
        let filtered: Vec<f64> = p
            .iter()
            .map(|&v| if v >= threshold { v } else { 0.0 })
            .collect();
        if filtered.iter().all(|&v| v == 0.0) {
            continue;
        }
        let p_norm = l1_normalize(&filtered)?;
        let mut prof = profile(table, unit, p);
        prof.lape = entropy_of_normalized(&p_norm);
        prof.p_norm = p_norm;
        prof.hfl_pass = true;
        prof.assigned_langs = filtered
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(l, _)| l)
            .collect();
        candidates.push(prof);
    }
    let survivors = candidates.len();
    candidates.sort_by(|a, b| {
        a.lape
            .total_cmp(&b.lape)
            .then(a.layer.cmp(&b.layer))
            .then(a.unit.cmp(&b.unit))
    });
    let keep = (params.bottom_frac * total_neurons as f64).floor() as usize;
    candidates.truncate(keep);
    Ok(NeuronReport {
        n_langs,
        threshold,
        total_neurons,
        survivors,
        selected: candidates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOverlap {
    pub a: usize,
    pub b: usize,
    pub intersection: u64,
    pub jaccard: f64,
}

/// Pairwise overlap of per-language feature sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedAnalysis {
    pub n_langs: usize,
    /// `intersection[a][b] = |S_a ∩ S_b|`; the diagonal is `|S_a|`.
    pub intersection: Vec<Vec<u64>>,
    pub jaccard: Vec<Vec<f64>>,
    /// Upper triangle including the diagonal, row-major.
    pub pairs: Vec<PairOverlap>,
}

/// `S_a` is the set of `(layer, unit)` whose assignment contains language
/// `a`. Jaccard is zero when both sets are empty.
pub fn shared_feature_analysis(profiles: &[FeatureProfile], n_langs: usize) -> SharedAnalysis {
    let mut sets: Vec<BTreeSet<(u16, u32)>> = vec![BTreeSet::new(); n_langs];
    for p in profiles {
        for &l in &p.assigned_langs {
            if l < n_langs {
                sets[l].insert((p.layer, p.unit));
            }
        }
    }
    let mut intersection = vec![vec![0u64; n_langs]; n_langs];
    let mut jaccard = vec![vec![0.0f64; n_langs]; n_langs];
    let mut pairs = Vec::new();
    for a in 0..n_langs {
        for b in a..n_langs {
            let inter = sets[a].intersection(&sets[b]).count() as u64;
            let union = (sets[a].len() + sets[b].len()) as u64 - inter;
            let j = if union == 0 {
                0.0
            } else {
                inter as f64 / union as f64
            };
            intersection[a][b] = inter;
            intersection[b][a] = inter;
            jaccard[a][b] = j;
            jaccard[b][a] = j;
            pairs.push(PairOverlap {
                a,
                b,
                intersection: inter,
                jaccard: j,
            });
        }
    }
    SharedAnalysis {
        n_langs,
        intersection,
        jaccard,
        pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_on_hundredths() {
        let mut v: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        assert_eq!(nearest_rank_percentile(&mut v, 95.0).unwrap(), 0.95);
        assert_eq!(nearest_rank_percentile(&mut v, 100.0).unwrap(), 1.0);
        assert_eq!(nearest_rank_percentile(&mut v, 0.5).unwrap(), 0.01);
        assert!(nearest_rank_percentile(&mut [], 95.0).is_err());
    }

    fn prof(unit: u32, langs: &[usize]) -> FeatureProfile {
        FeatureProfile {
            layer: 0,
            unit,
            p: vec![],
            p_norm: vec![],
            lape: 0.0,
            assigned_langs: langs.to_vec(),
            hfl_pass: true,
            max_activation: 1.0,
        }
    }

    #[test]
    fn overlap_of_shifted_sets() {
        // S_0 = {1,2,3}, S_1 = {2,3,4}
        let profiles = vec![
            prof(1, &[0]),
            prof(2, &[0, 1]),
            prof(3, &[0, 1]),
            prof(4, &[1]),
        ];
        let a = shared_feature_analysis(&profiles, 2);
        assert_eq!(a.intersection[0][1], 2);
        assert_eq!(a.jaccard[0][1], 0.5);
        assert_eq!(a.intersection[0][0], 3);
        assert_eq!(a.jaccard[1][1], 1.0);
    }

    #[test]
    fn empty_sets_have_zero_jaccard() {
        let a = shared_feature_analysis(&[], 3);
        assert!(a.jaccard.iter().flatten().all(|&j| j == 0.0));
        assert_eq!(a.pairs.len(), 6);
    }
}
