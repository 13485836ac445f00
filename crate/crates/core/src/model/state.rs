use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::Hyperparameters;
use crate::context::{
    snapshot_contains, wrap, AttributeKind, ContextBound, ContextSchema, ContextSnapshot,
    ContextValue, WeightVector,
};
use crate::error::{Error, Result};

/// An axis-aligned region of snapshot space: per-attribute bounds plus a mid
/// snapshot. Utilities are learned per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub id: u64,
    pub bounds: Vec<ContextBound>,
    pub mid: ContextSnapshot,
    /// Half the uniformly weighted distance between the lower and upper corner.
    pub radius: f64,
    /// Set while the utilities still come from initialization rather than
    /// explicit feedback received in this state.
    pub fresh_init: bool,
    pub created_at: i64,
}

impl State {
    /// Builds a state from bounds and a mid snapshot and computes its radius.
    pub fn from_bounds(
        schema: &ContextSchema,
        id: u64,
        bounds: Vec<ContextBound>,
        mid: ContextSnapshot,
        created_at: i64,
    ) -> Result<Self> {
        schema.check_len(bounds.len())?;
        schema.check_len(mid.len())?;
        let radius = bounds_radius(schema, &bounds)?;
        Ok(Self { id, bounds, mid, radius, fresh_init: false, created_at })
    }

    /// A state centred on `context` using the default per-attribute radius.
    pub fn around(
        schema: &ContextSchema,
        id: u64,
        context: &ContextSnapshot,
        hyper: &Hyperparameters,
    ) -> Result<Self> {
        schema.check_len(context.len())?;
        let bounds = schema
            .attributes()
            .iter()
            .zip(&context.values)
            .map(|(desc, value)| default_bound(&desc.kind, value, hyper, &desc.name))
            .collect::<Result<Vec<_>>>()?;
        let mut state = Self::from_bounds(schema, id, bounds, context.clone(), context.timestamp)?;
        state.fresh_init = true;
        Ok(state)
    }

    #[inline]
    pub fn contains(&self, context: &ContextSnapshot) -> Result<bool> {
        snapshot_contains(&self.bounds, context)
    }

    /// Weighted distance from the state to a snapshot: measured from the mid
    /// snapshot for continuous attributes and by set membership for
    /// categorical ones.
    pub fn distance_to(
        &self,
        schema: &ContextSchema,
        context: &ContextSnapshot,
        weights: &WeightVector,
    ) -> Result<f64> {
        self.distance_within(schema, context, weights, f64::INFINITY)
            .map(|d| d.unwrap_or(f64::INFINITY))
    }

    /// Like [`Self::distance_to`], but gives up with `None` as soon as the
    /// partial sum exceeds `limit`. The summation order is the same, so a
    /// returned distance is bit-identical to the full one.
    #[inline]
    pub fn distance_within(
        &self,
        schema: &ContextSchema,
        context: &ContextSnapshot,
        weights: &WeightVector,
        limit: f64,
    ) -> Result<Option<f64>> {
        schema.check_len(context.len())?;
        schema.check_len(weights.len())?;
        let mut total = 0.0;
        for (i, desc) in schema.attributes().iter().enumerate() {
            total += weights.as_slice()[i]
                * desc.distance_to_bound(&self.bounds[i], &self.mid.values[i], &context.values[i])?;
            if total > limit {
                return Ok(None);
            }
        }
        Ok(Some(total))
    }
}

pub(crate) fn bounds_radius(schema: &ContextSchema, bounds: &[ContextBound]) -> Result<f64> {
    let uniform = WeightVector::uniform(schema.len());
    let mut total = 0.0;
    for ((desc, bound), w) in schema.attributes().iter().zip(bounds).zip(uniform.as_slice()) {
        total += w * desc.bound_extent(bound)?;
    }
    Ok(total / 2.0)
}

fn default_bound(
    kind: &AttributeKind,
    value: &ContextValue,
    hyper: &Hyperparameters,
    name: &str,
) -> Result<ContextBound> {
    let mismatch = || Error::TypeMismatch { attribute: String::from(name), expected: kind.name() };
    Ok(match (kind, value) {
        (AttributeKind::Numeric { min, max }, ContextValue::Scalar(x)) => {
            let r = hyper.radius_fraction * (max - min);
            ContextBound::Numeric { lo: (x - r).max(*min), hi: (x + r).min(*max) }
        }
        (AttributeKind::Cyclic { period }, ContextValue::Scalar(x)) => {
            let r = hyper.cyclic_radius_fraction * period;
            ContextBound::Cyclic { lo: wrap(x - r, *period), width: (2.0 * r).min(*period), period: *period }
        }
        (AttributeKind::Vector { ranges, .. }, ContextValue::Vector(xs)) if xs.len() == ranges.len() => {
            ContextBound::Vector {
                ranges: xs
                    .iter()
                    .zip(ranges)
                    .map(|(x, [lo, hi])| {
                        let r = hyper.radius_fraction * (hi - lo);
                        [(x - r).max(*lo), (x + r).min(*hi)]
                    })
                    .collect(),
            }
        }
        (AttributeKind::Categorical { .. }, ContextValue::Label(l)) => {
            let mut labels = BTreeSet::new();
            labels.insert(l.clone());
            ContextBound::Categorical { labels }
        }
        _ => return Err(mismatch()),
    })
}

/// Representative value of a bound: the midpoint for continuous kinds, and for
/// categorical sets `preferred` when it is a member, else the smallest label.
pub(crate) fn bound_midpoint(bound: &ContextBound, preferred: &ContextValue) -> ContextValue {
    match bound {
        ContextBound::Numeric { lo, hi } => ContextValue::Scalar(lo + (hi - lo) / 2.0),
        ContextBound::Cyclic { lo, width, period } => ContextValue::Scalar(wrap(lo + width / 2.0, *period)),
        ContextBound::Vector { ranges } => {
            ContextValue::Vector(ranges.iter().map(|[lo, hi]| lo + (hi - lo) / 2.0).collect())
        }
        ContextBound::Categorical { labels } => match preferred {
            ContextValue::Label(l) if labels.contains(l) => preferred.clone(),
            _ => ContextValue::Label(labels.iter().next().cloned().unwrap_or_default()),
        },
    }
}
