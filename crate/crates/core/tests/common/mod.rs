//! Reference implementations written straight from the definitions, sharing
//! no code with the crate. Shared by the property suites and the acceptance
//! suite.

#![allow(dead_code)]

use std::collections::BTreeMap;

use actuate_core::{
    ActionId, AttributeDescriptor, AttributeKind, ContextBound, ContextSchema, ContextSnapshot,
    ContextValue, FeedbackEntry, LearnedState,
};
use proptest::prelude::*;

#[allow(dead_code)]
mod checks;
#[allow(unused_imports)]
pub use checks::*;

pub const ROOMS: [&str; 3] = ["bath", "hall", "kitchen"];
pub const ACTIONS: [&str; 4] = ["dim", "off", "on", "play"];

/// user, room, time of day, temperature, 2-d position.
pub fn schema() -> ContextSchema {
    ContextSchema::new(vec![
        AttributeDescriptor::categorical("user", ["u"]),
        AttributeDescriptor::categorical("room", ROOMS),
        AttributeDescriptor::cyclic("time", 86400.0),
        AttributeDescriptor::numeric("temp", 0.0, 40.0),
        AttributeDescriptor::vector("pos", vec![[0.0, 10.0], [0.0, 10.0]]),
    ])
    .unwrap()
}

pub fn snapshot(room: &str, time: f64, temp: f64, pos: [f64; 2]) -> ContextSnapshot {
    ContextSnapshot::new(
        vec![
            ContextValue::label("u"),
            ContextValue::label(room),
            ContextValue::Scalar(time),
            ContextValue::Scalar(temp),
            ContextValue::Vector(pos.to_vec()),
        ],
        0,
    )
}

pub fn arb_snapshot() -> impl Strategy<Value = ContextSnapshot> {
    (0..ROOMS.len(), 0.0..86400.0f64, 0.0..40.0f64, 0.0..10.0f64, 0.0..10.0f64)
        .prop_map(|(r, t, temp, x, y)| snapshot(ROOMS[r], t, temp, [x, y]))
}

/// Random bounds over the schema of [`schema`].
pub fn arb_bounds() -> impl Strategy<Value = Vec<ContextBound>> {
    (
        prop::sample::subsequence(ROOMS.to_vec(), 1..=3),
        0.0..86400.0f64,
        0.0..86400.0f64,
        0.0..40.0f64,
        0.0..40.0f64,
        prop::array::uniform4(0.0..10.0f64),
    )
        .prop_map(|(rooms, lo, width, a, b, v)| {
            vec![
                ContextBound::labels(["u"]),
                ContextBound::labels(rooms),
                ContextBound::Cyclic { lo, width, period: 86400.0 },
                ContextBound::Numeric { lo: a.min(b), hi: a.max(b) },
                ContextBound::Vector { ranges: vec![[v[0].min(v[1]), v[0].max(v[1])], [v[2].min(v[3]), v[2].max(v[3])]] },
            ]
        })
}

pub fn rem(x: f64, p: f64) -> f64 {
    let r = x.rem_euclid(p);
    if r >= p {
        0.0
    } else {
        r
    }
}

pub fn bound_contains(bound: &ContextBound, value: &ContextValue) -> bool {
    match (bound, value) {
        (ContextBound::Numeric { lo, hi }, ContextValue::Scalar(x)) => lo <= x && x <= hi,
        (ContextBound::Cyclic { lo, width, period }, ContextValue::Scalar(x)) => {
            rem(x - lo, *period) <= *width
        }
        (ContextBound::Vector { ranges }, ContextValue::Vector(xs)) => {
            ranges.len() == xs.len() && ranges.iter().zip(xs).all(|([lo, hi], x)| lo <= x && x <= hi)
        }
        (ContextBound::Categorical { labels }, ContextValue::Label(l)) => labels.contains(l),
        _ => panic!("shape mismatch"),
    }
}

pub fn contains(bounds: &[ContextBound], c: &ContextSnapshot) -> bool {
    bounds.iter().zip(&c.values).all(|(b, v)| bound_contains(b, v))
}

pub fn elem_distance(kind: &AttributeKind, a: &ContextValue, b: &ContextValue) -> f64 {
    match (kind, a, b) {
        (AttributeKind::Numeric { min, max }, ContextValue::Scalar(x), ContextValue::Scalar(y)) => {
            (x.clamp(*min, *max) - y.clamp(*min, *max)).abs() / (max - min)
        }
        (AttributeKind::Cyclic { period }, ContextValue::Scalar(x), ContextValue::Scalar(y)) => {
            let d = rem(x - y, *period);
            d.min(period - d) / (period / 2.0)
        }
        (AttributeKind::Vector { ranges, .. }, ContextValue::Vector(xs), ContextValue::Vector(ys)) => {
            let mut s = 0.0;
            for i in 0..ranges.len() {
                let [lo, hi] = ranges[i];
                let d = (xs[i].clamp(lo, hi) - ys[i].clamp(lo, hi)) / (hi - lo);
                s += d * d;
            }
            (s / ranges.len() as f64).sqrt()
        }
        (AttributeKind::Categorical { .. }, ContextValue::Label(x), ContextValue::Label(y)) => {
            (x != y) as u8 as f64
        }
        _ => panic!("shape mismatch"),
    }
}

/// State-to-snapshot distance: mid for continuous attributes, set
/// membership for categorical ones.
pub fn state_distance(schema: &ContextSchema, ls: &LearnedState, c: &ContextSnapshot, w: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, desc) in schema.attributes().iter().enumerate() {
        let d = match (&ls.state.bounds[i], &c.values[i]) {
            (ContextBound::Categorical { labels }, ContextValue::Label(l)) => {
                (!labels.contains(l)) as u8 as f64
            }
            _ => elem_distance(&desc.kind, &ls.state.mid.values[i], &c.values[i]),
        };
        total += w[i] * d;
    }
    total
}

pub fn sigma(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn binary_entropy(pos: usize, total: usize) -> f64 {
    let h = |p: f64| if p == 0.0 { 0.0 } else { -p * p.log2() };
    let p = pos as f64 / total as f64;
    h(p) + h(1.0 - p)
}

pub fn entropy<'a>(entries: impl IntoIterator<Item = &'a FeedbackEntry>) -> f64 {
    let mut counts: BTreeMap<Option<ActionId>, (usize, usize)> = BTreeMap::new();
    for e in entries {
        let c = counts.entry(e.proposal.action.clone()).or_default();
        c.0 += e.positive as usize;
        c.1 += 1;
    }
    counts.values().map(|(p, t)| binary_entropy(*p, *t)).fold(0.0, f64::max)
}

/// Best `(utility, radius, action)` over containing states, the proposal
/// ordering: utility high, radius low, action id low.
pub fn best_proposal(
    states: &[LearnedState],
    c: &ContextSnapshot,
    allowed: &[ActionId],
) -> Option<(f64, f64, ActionId)> {
    let mut all = Vec::new();
    for ls in states.iter().filter(|ls| contains(&ls.state.bounds, c)) {
        for a in allowed {
            all.push((ls.utilities.0[a], ls.state.radius, a.clone()));
        }
    }
    all.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(&y.2)));
    all.into_iter().next()
}
