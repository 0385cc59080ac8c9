// SPDX-License-Identifier: MIT OR Apache-2.0

//! Language activation probability entropy.
//!
//! For every unit (SAE feature or FFN neuron) the fraction of tokens of each
//! language on which it is active (`value > 0`) forms a vector `p`. Its
//! L1-normalised entropy is the unit's LAPE; low values mean the unit fires
//! for few languages.
//!
//! SAE features go through two frequency filters before assignment: active
//! on more than `hfl_token_frac` of a language's tokens, and in at least
//! `n_min` percent of that language's examples. A passing feature is
//! assigned to every language whose probability reaches `t_threshold`
//! percent of its maximum; a singleton assignment makes it
//! language-specific, a larger one language-shared.
//!
//! Neurons use a global percentile cut on the probabilities instead, then
//! keep the lowest-entropy fraction.

mod select;
mod table;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use select::{
    find_language_specific, find_language_specific_neurons, shared_feature_analysis, LapeReport,
    NeuronParams, NeuronReport, PairOverlap, SharedAnalysis,
};
pub use table::ProbabilityTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    SaeFeature,
    FfnNeuron,
}

/// Filters for SAE feature selection. Defaults: 10% tokens, N = 98, T = 50.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LapeParams {
    /// Strict lower bound on a language's active-token fraction.
    pub hfl_token_frac: f64,
    /// Minimum percentage of a language's examples the unit must be active
    /// in (inclusive). Values above 100 are allowed and select nothing.
    pub n_min: f64,
    /// Percentage of `max(p)` a language must reach to be assigned
    /// (inclusive).
    pub t_threshold: f64,
    /// Require the token and example conditions to hold for the same
    /// language. When false each may be met by a different language.
    pub same_language: bool,
}

impl Default for LapeParams {
    fn default() -> Self {
        Self {
            hfl_token_frac: 0.10,
            n_min: 98.0,
            t_threshold: 50.0,
            same_language: true,
        }
    }
}

impl LapeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_threshold > 0.0 && self.t_threshold <= 100.0) {
            return Err(Error::InvalidParam(format!(
                "T must be in (0, 100], got {}",
                self.t_threshold
            )));
        }
        if !self.n_min.is_finite() || self.n_min <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "N must be positive, got {}",
                self.n_min
            )));
        }
        if !(0.0..1.0).contains(&self.hfl_token_frac) {
            return Err(Error::InvalidParam(format!(
                "token fraction must be in [0, 1), got {}",
                self.hfl_token_frac
            )));
        }
        Ok(())
    }
}

/// Per-unit outcome of the selection pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureProfile {
    pub layer: u16,
    pub unit: u32,
    /// Activation probability per language.
    pub p: Vec<f64>,
    /// `p / Σp`.
    pub p_norm: Vec<f64>,
    pub lape: f64,
    /// Sorted language indices the unit is assigned to.
    pub assigned_langs: Vec<usize>,
    pub hfl_pass: bool,
    /// Largest activation observed over the multilingual corpora; the
    /// steering amplitude.
    pub max_activation: f32,
}

impl FeatureProfile {
    pub fn is_specific(&self) -> bool {
        self.hfl_pass && self.assigned_langs.len() == 1
    }

    pub fn is_shared(&self) -> bool {
        self.hfl_pass && self.assigned_langs.len() >= 2
    }

    pub fn specific_language(&self) -> Option<usize> {
        self.is_specific().then(|| self.assigned_langs[0])
    }
}

/// Result of [`classify_feature`] for one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub p_norm: Vec<f64>,
    pub lape: f64,
    pub hfl_pass: bool,
    pub assigned_langs: Vec<usize>,
}

fn check_probabilities(p: &[f64]) -> Result<f64> {
    if let Some(v) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidParam(format!(
            "probabilities must be finite and non-negative, got {v}"
        )));
    }
    let sum: f64 = p.iter().sum();
    if sum <= 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(sum)
}

/// L1-normalised copy of `p`.
pub fn l1_normalize(p: &[f64]) -> Result<Vec<f64>> {
    let sum = check_probabilities(p)?;
    Ok(p.iter().map(|v| v / sum).collect())
}

/// Natural-log entropy of the L1-normalised `p`, with `0 ln 0 = 0`.
pub fn lape_entropy(p: &[f64]) -> Result<f64> {
    Ok(entropy_of_normalized(&l1_normalize(p)?))
}

fn entropy_of_normalized(q: &[f64]) -> f64 {
    let h: f64 = q.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    h.max(0.0)
}

/// Languages whose probability is at least `t_threshold`% of the maximum.
pub fn assign_languages(p: &[f64], t_threshold: f64) -> Vec<usize> {
    let max = p.iter().copied().fold(0.0f64, f64::max);
    let cut = t_threshold / 100.0 * max;
    p.iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0 && v >= cut)
        .map(|(l, _)| l)
        .collect()
}

/// Apply the frequency filters and the T-of-max assignment to one unit.
///
/// `token_frac` and `example_frac` are per-language fractions in `[0, 1]`.
pub fn classify_feature(
    p: &[f64],
    token_frac: &[f64],
    example_frac: &[f64],
    params: &LapeParams,
) -> Result<Classification> {
    params.validate()?;
    for other in [token_frac.len(), example_frac.len()] {
        if other != p.len() {
            return Err(Error::LengthMismatch {
                left: p.len(),
                right: other,
            });
        }
    }
    let p_norm = l1_normalize(p)?;
    let lape = entropy_of_normalized(&p_norm);

    let example_cut = params.n_min / 100.0;
    let token_ok = |l: usize| token_frac[l] > params.hfl_token_frac;
    let example_ok = |l: usize| example_frac[l] >= example_cut;
    let hfl_pass = if params.same_language {
        (0..p.len()).any(|l| token_ok(l) && example_ok(l))
    } else {
        (0..p.len()).any(token_ok) && (0..p.len()).any(example_ok)
    };
    let assigned_langs = if hfl_pass {
        assign_languages(p, params.t_threshold)
    } else {
        Vec::new()
    };
    Ok(Classification {
        p_norm,
        lape,
        hfl_pass,
        assigned_langs,
    })
}
