// SPDX-License-Identifier: MIT OR Apache-2.0

//! Additive steering of FFN-output activations.
//!
//! Each plan entry adds `alpha · amplitude · d` at its layer and every
//! token position, where `d` is an SAE decoder column or an FFN
//! down-projection column and `amplitude` is the largest activation the
//! unit reached on the multilingual corpora. Positive `alpha` amplifies,
//! negative `alpha` suppresses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lape::{FeatureProfile, UnitKind};
use crate::sae::feature_direction;
use crate::store::{ActivationShard, FfnDown, SaeWeights, ShardEncoding, Values};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringEntry {
    pub layer: u16,
    pub index: u32,
    pub amplitude: f32,
    pub alpha: f32,
}

/// JSON: `{"unit_kind": ..., "entries": [{layer, index, amplitude, alpha}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringPlan {
    pub unit_kind: UnitKind,
    pub entries: Vec<SteeringEntry>,
}

impl SteeringPlan {
    pub fn empty(unit_kind: UnitKind) -> Self {
        Self {
            unit_kind,
            entries: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            if !(e.amplitude.is_finite() && e.amplitude >= 0.0) {
                return Err(Error::InvalidParam(format!(
                    "amplitude of ({}, {}) must be finite and non-negative",
                    e.layer, e.index
                )));
            }
            if !e.alpha.is_finite() {
                return Err(Error::InvalidParam("alpha must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    /// Same entries with every alpha replaced.
    pub fn with_alpha(&self, alpha: f32) -> Self {
        Self {
            unit_kind: self.unit_kind,
            entries: self
                .entries
                .iter()
                .map(|e| SteeringEntry { alpha, ..*e })
                .collect(),
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = u16> + '_ {
        self.entries.iter().map(|e| e.layer)
    }
}

/// One entry per profile assigned to `language`, amplitude taken from the
/// profile's recorded maximum.
pub fn build_plan(
    profiles: &[FeatureProfile],
    language: usize,
    alpha: f32,
    unit_kind: UnitKind,
) -> Result<SteeringPlan> {
    let entries: Vec<SteeringEntry> = profiles
        .iter()
        .filter(|p| p.assigned_langs.contains(&language))
        .map(|p| SteeringEntry {
            layer: p.layer,
            index: p.unit,
            amplitude: p.max_activation.max(0.0),
            alpha,
        })
        .collect();
    if entries.is_empty() {
        return Err(Error::NoFeaturesForLanguage(language));
    }
    let plan = SteeringPlan { unit_kind, entries };
    plan.validate()?;
    Ok(plan)
}

/// Where steering directions come from.
pub trait DirectionSource {
    /// Model dimension at `layer`.
    fn dim(&self, layer: u16) -> Result<usize>;
    fn direction(&self, layer: u16, index: u32) -> Result<Vec<f32>>;
}

fn missing_layer(layer: u16) -> Error {
    Error::InvalidParam(format!("no direction source for layer {layer}"))
}

/// SAE decoder columns, one SAE per layer.
#[derive(Debug, Default)]
pub struct SaeDirections<'a> {
    by_layer: BTreeMap<u16, &'a SaeWeights>,
}

impl<'a> SaeDirections<'a> {
    pub fn new(saes: impl IntoIterator<Item = &'a SaeWeights>) -> Self {
        Self {
            by_layer: saes.into_iter().map(|w| (w.layer(), w)).collect(),
        }
    }
}

impl DirectionSource for SaeDirections<'_> {
    fn dim(&self, layer: u16) -> Result<usize> {
        self.by_layer
            .get(&layer)
            .map(|w| w.d())
            .ok_or_else(|| missing_layer(layer))
    }

    fn direction(&self, layer: u16, index: u32) -> Result<Vec<f32>> {
        let w = self
            .by_layer
            .get(&layer)
            .ok_or_else(|| missing_layer(layer))?;
        feature_direction(w, index as usize)
    }
}

/// FFN down-projection columns, one matrix per layer.
#[derive(Debug, Default)]
pub struct NeuronDirections<'a> {
    by_layer: BTreeMap<u16, &'a FfnDown>,
}

impl<'a> NeuronDirections<'a> {
    pub fn new(mats: impl IntoIterator<Item = &'a FfnDown>) -> Self {
        Self {
            by_layer: mats.into_iter().map(|m| (m.layer(), m)).collect(),
        }
    }
}

impl DirectionSource for NeuronDirections<'_> {
    fn dim(&self, layer: u16) -> Result<usize> {
        self.by_layer
            .get(&layer)
            .map(|m| m.d())
            .ok_or_else(|| missing_layer(layer))
    }

    fn direction(&self, layer: u16, index: u32) -> Result<Vec<f32>> {
        let m = self
            .by_layer
            .get(&layer)
            .ok_or_else(|| missing_layer(layer))?;
        m.column(index as usize)
    }
}

/// The summed steering offset for one layer, or `None` when no entry with a
/// non-zero coefficient targets it.
pub fn layer_delta(
    layer: u16,
    dim: usize,
    plan: &SteeringPlan,
    directions: &dyn DirectionSource,
) -> Result<Option<Vec<f64>>> {
    let mut delta: Option<Vec<f64>> = None;
    for e in plan.entries.iter().filter(|e| e.layer == layer) {
        let coef = e.alpha as f64 * e.amplitude as f64;
        if coef == 0.0 {
            continue;
        }
        let d = directions.direction(layer, e.index)?;
        if d.len() != dim {
            return Err(Error::DimMismatch {
                context: "steering direction",
                expected: dim as u64,
                found: d.len() as u64,
            });
        }
        let acc = delta.get_or_insert_with(|| vec![0.0; dim]);
        for (a, &v) in acc.iter_mut().zip(&d) {
            *a += coef * v as f64;
        }
    }
    Ok(delta)
}

fn add_delta(x: &[f32], delta: &[f64]) -> Vec<f32> {
    x.iter()
        .zip(delta)
        .map(|(&a, &b)| (a as f64 + b) as f32)
        .collect()
}

/// `x + Σ alpha · amplitude · d` over the plan entries at `layer`.
pub fn apply_steering(
    x: &[f32],
    layer: u16,
    plan: &SteeringPlan,
    directions: &dyn DirectionSource,
) -> Result<Vec<f32>> {
    match layer_delta(layer, x.len(), plan, directions)? {
        Some(delta) => Ok(add_delta(x, &delta)),
        None => Ok(x.to_vec()),
    }
}

/// Steer every record of a dense FFN-output shard; metadata is untouched.
pub fn steer_shard(
    shard: &ActivationShard,
    plan: &SteeringPlan,
    directions: &dyn DirectionSource,
) -> Result<ActivationShard> {
    if shard.encoding != ShardEncoding::Dense {
        return Err(Error::KindMismatch(
            "steering needs a dense FFN-output shard".into(),
        ));
    }
    let delta = layer_delta(shard.layer, shard.dim as usize, plan, directions)?;
    let Some(delta) = delta else {
        return Ok(shard.clone());
    };
    let mut out = ActivationShard::new(shard.layer, shard.language_id, shard.dim, shard.encoding);
    out.records = shard
        .records
        .iter()
        .map(|r| match &r.values {
            Values::Dense(x) => Ok(crate::store::TokenRecord {
                token_id: r.token_id,
                example_id: r.example_id,
                values: Values::Dense(add_delta(x, &delta)),
            }),
            Values::Sparse(_) => Err(Error::KindMismatch("sparse record in dense shard".into())),
        })
        .collect::<Result<_>>()?;
    Ok(out)
}
