//! Flat copy of each state's mid point and bounds, one row per state, so
//! containment and neighbour scans read contiguous memory instead of
//! following every state's vectors.

use alloc::vec::Vec;

use crate::context::{cyclic_gap, wrap, AttributeKind, ContextBound, ContextSchema, ContextSnapshot, ContextValue};
use crate::model::State;

/// Marks a categorical bound that is not a single label; such attributes
/// fall back to the state's own bound.
const MULTI: f64 = f64::NAN;

#[derive(Debug, Clone, Copy)]
enum Slot {
    /// mid, lo, hi
    Numeric { at: usize, min: f64, max: f64 },
    /// mid, lo, width, period
    Cyclic { at: usize, period: f64 },
    /// mids, then lo/hi pairs
    Vector { at: usize, dims: usize },
    /// label index or `MULTI`
    Categorical { at: usize, attr: usize },
}

#[derive(Debug, Clone, Default)]
pub(crate) struct StateIndex {
    slots: Vec<Slot>,
    stride: usize,
    rows: Vec<f64>,
}

/// The index is derived data; two models are equal whatever its state.
impl PartialEq for StateIndex {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// A snapshot encoded against the index layout.
pub(crate) struct Query {
    values: Vec<f64>,
}

fn label_index(schema: &ContextSchema, attr: usize, label: &str) -> Option<usize> {
    match &schema.attributes()[attr].kind {
        AttributeKind::Categorical { labels } => labels.iter().position(|l| l == label),
        _ => None,
    }
}

impl StateIndex {
    pub(crate) fn len(&self) -> usize {
        if self.stride == 0 {
            0
        } else {
            self.rows.len() / self.stride
        }
    }

    pub(crate) fn clear(&mut self) {
        self.rows.clear();
    }

    fn layout(&mut self, schema: &ContextSchema) {
        if !self.slots.is_empty() || schema.is_empty() {
            return;
        }
        let mut at = 0;
        for (attr, desc) in schema.attributes().iter().enumerate() {
            let (slot, width) = match &desc.kind {
                AttributeKind::Numeric { min, max } => (Slot::Numeric { at, min: *min, max: *max }, 3),
                AttributeKind::Cyclic { period } => (Slot::Cyclic { at, period: *period }, 4),
                AttributeKind::Vector { dims, .. } => (Slot::Vector { at, dims: *dims }, 3 * dims),
                AttributeKind::Categorical { .. } => (Slot::Categorical { at, attr }, 1),
            };
            self.slots.push(slot);
            at += width;
        }
        self.stride = at;
    }

    /// Encodes `state` as a row, or `None` if its shape does not fit the
    /// schema (the caller then uses the slow path).
    fn row(&self, schema: &ContextSchema, state: &State) -> Option<Vec<f64>> {
        let mut row = Vec::with_capacity(self.stride);
        for (i, slot) in self.slots.iter().enumerate() {
            match (slot, state.bounds.get(i)?, state.mid.values.get(i)?) {
                (Slot::Numeric { .. }, ContextBound::Numeric { lo, hi }, ContextValue::Scalar(m)) => {
                    row.extend([*m, *lo, *hi]);
                }
                (Slot::Cyclic { .. }, ContextBound::Cyclic { lo, width, period }, ContextValue::Scalar(m)) => {
                    row.extend([*m, *lo, *width, *period]);
                }
                (Slot::Vector { dims, .. }, ContextBound::Vector { ranges }, ContextValue::Vector(m))
                    if m.len() == *dims && ranges.len() == *dims =>
                {
                    row.extend(m);
                    row.extend(ranges.iter().flatten());
                }
                (Slot::Categorical { attr, .. }, ContextBound::Categorical { labels }, _) => {
                    let single = match labels.len() {
                        1 => label_index(schema, *attr, labels.first()?)? as f64,
                        _ => MULTI,
                    };
                    row.push(single);
                }
                _ => return None,
            }
        }
        Some(row)
    }

    /// Rebuilds the index from scratch. Returns false, leaving it empty, if
    /// some state cannot be encoded.
    pub(crate) fn rebuild<'a>(&mut self, schema: &ContextSchema, states: impl Iterator<Item = &'a State>) -> bool {
        self.layout(schema);
        self.rows.clear();
        for s in states {
            match self.row(schema, s) {
                Some(r) => self.rows.extend(r),
                None => {
                    self.rows.clear();
                    return false;
                }
            }
        }
        true
    }

    /// Inserts `state` as row `at`. Returns false if it cannot be encoded.
    pub(crate) fn insert(&mut self, schema: &ContextSchema, at: usize, state: &State) -> bool {
        self.layout(schema);
        match self.row(schema, state) {
            Some(r) => {
                let start = at * self.stride;
                self.rows.splice(start..start, r);
                true
            }
            None => false,
        }
    }

    pub(crate) fn remove(&mut self, at: usize) {
        let start = at * self.stride;
        self.rows.drain(start..start + self.stride);
    }

    /// Encodes `context`; `None` if some value does not have its attribute's
    /// type, in which case the slow path reports the error.
    pub(crate) fn query(&self, schema: &ContextSchema, context: &ContextSnapshot) -> Option<Query> {
        if context.values.len() != self.slots.len() {
            return None;
        }
        let mut values = Vec::with_capacity(self.slots.len() + 4);
        for (slot, v) in self.slots.iter().zip(&context.values) {
            match (slot, v) {
                (Slot::Numeric { .. } | Slot::Cyclic { .. }, ContextValue::Scalar(x)) => values.push(*x),
                (Slot::Vector { dims, .. }, ContextValue::Vector(xs)) if xs.len() == *dims => values.extend(xs),
                (Slot::Categorical { attr, .. }, ContextValue::Label(l)) => {
                    values.push(label_index(schema, *attr, l).map_or(-1.0, |i| i as f64));
                }
                _ => return None,
            }
        }
        Some(Query { values })
    }

    fn row_at(&self, i: usize) -> &[f64] {
        &self.rows[i * self.stride..(i + 1) * self.stride]
    }

    /// Same result as `snapshot_contains(&state.bounds, context)`.
    pub(crate) fn contains(&self, i: usize, q: &Query, state: &State, context: &ContextSnapshot) -> bool {
        let row = self.row_at(i);
        let mut qi = 0;
        for (a, slot) in self.slots.iter().enumerate() {
            let inside = match *slot {
                Slot::Numeric { at, .. } => {
                    let x = q.values[qi];
                    qi += 1;
                    row[at + 1] <= x && x <= row[at + 2]
                }
                Slot::Cyclic { at, .. } => {
                    let x = q.values[qi];
                    qi += 1;
                    wrap(x - row[at + 1], row[at + 3]) <= row[at + 2]
                }
                Slot::Vector { at, dims } => {
                    let xs = &q.values[qi..qi + dims];
                    qi += dims;
                    xs.iter().enumerate().all(|(d, x)| row[at + dims + 2 * d] <= *x && *x <= row[at + dims + 2 * d + 1])
                }
                Slot::Categorical { at, .. } => {
                    let x = q.values[qi];
                    qi += 1;
                    let single = row[at];
                    if single.is_nan() {
                        matches!(
                            (&state.bounds[a], &context.values[a]),
                            (ContextBound::Categorical { labels }, ContextValue::Label(l)) if labels.contains(l)
                        )
                    } else {
                        single == x
                    }
                }
            };
            if !inside {
                return false;
            }
        }
        true
    }

    /// Same result as `State::distance_within`, summed in the same order:
    /// `None` once the partial sum exceeds `limit`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn distance_within(
        &self,
        schema: &ContextSchema,
        i: usize,
        q: &Query,
        weights: &[f64],
        state: &State,
        context: &ContextSnapshot,
        limit: f64,
    ) -> Option<f64> {
        let row = self.row_at(i);
        let mut qi = 0;
        let mut total = 0.0;
        for (a, slot) in self.slots.iter().enumerate() {
            let d = match *slot {
                Slot::Numeric { at, min, max } => {
                    let y = q.values[qi];
                    qi += 1;
                    let d = (row[at].clamp(min, max) - y.clamp(min, max)).abs() / (max - min);
                    d.min(1.0)
                }
                Slot::Cyclic { at, period } => {
                    let y = q.values[qi];
                    qi += 1;
                    cyclic_gap(row[at], y, period) / (period / 2.0)
                }
                Slot::Vector { at, dims } => {
                    let AttributeKind::Vector { ranges, .. } = &schema.attributes()[a].kind else {
                        return None;
                    };
                    let ys = &q.values[qi..qi + dims];
                    qi += dims;
                    let sq: f64 = row[at..at + dims]
                        .iter()
                        .zip(ys)
                        .zip(ranges)
                        .map(|((x, y), [lo, hi])| {
                            let d = (x.clamp(*lo, *hi) - y.clamp(*lo, *hi)) / (hi - lo);
                            d * d
                        })
                        .sum();
                    (libm::sqrt(sq) / libm::sqrt(ranges.len() as f64)).min(1.0)
                }
                Slot::Categorical { at, .. } => {
                    let x = q.values[qi];
                    qi += 1;
                    let single = row[at];
                    let member = if single.is_nan() {
                        matches!(
                            (&state.bounds[a], &context.values[a]),
                            (ContextBound::Categorical { labels }, ContextValue::Label(l)) if labels.contains(l)
                        )
                    } else {
                        single == x
                    };
                    if member { 0.0 } else { 1.0 }
                }
            };
            total += weights[a] * d;
            if total > limit {
                return None;
            }
        }
        Some(total)
    }
}
