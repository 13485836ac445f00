//! Candidate generation for entropy-driven state splitting.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::entropy::state_entropy;
use super::state::{bound_midpoint, State};
use super::FeedbackEntry;
use crate::context::{wrap, ContextBound, ContextSchema, ContextSnapshot};
use crate::error::Result;

/// How a candidate divides its parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitRule {
    /// Values below `at` go left, the rest right. `dim` selects the
    /// component of a vector attribute.
    Cut { attribute: usize, dim: Option<usize>, at: f64 },
    /// One label against the rest of the set.
    Category { attribute: usize, label: String },
}

impl SplitRule {
    pub fn attribute(&self) -> usize {
        match self {
            SplitRule::Cut { attribute, .. } | SplitRule::Category { attribute, .. } => *attribute,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub rule: SplitRule,
    pub left: State,
    pub right: State,
    /// Parent entropy minus the unweighted sum of child entropies.
    pub gain: f64,
}

/// Enumerates every binary split of `state` along a single attribute and
/// scores it against the feedback cache.
///
/// Continuous attributes (and each vector component) get `split_points`
/// evenly spaced cuts strictly inside the bound; categorical sets with at
/// least two labels get one one-vs-rest split per label. Degenerate bounds
/// produce nothing, and neither does a cut that rounding leaves unable to
/// place some cached entry in exactly one child.
pub fn candidate_splits<'a, I>(
    schema: &ContextSchema,
    state: &State,
    cache: I,
    split_points: usize,
) -> Result<Vec<SplitCandidate>>
where
    I: IntoIterator<Item = &'a FeedbackEntry>,
    I::IntoIter: Clone,
{
    let entries = cache.into_iter();
    let parent_entropy = state_entropy(entries.clone());
    let mut out = Vec::new();

    for (attribute, bound) in state.bounds.iter().enumerate() {
        for (rule, left_bound, right_bound) in attribute_splits(attribute, bound, split_points) {
            let left = child(schema, state, attribute, left_bound)?;
            let right = child(schema, state, attribute, right_bound)?;

            let mut left_entries = Vec::new();
            let mut right_entries = Vec::new();
            let mut exact = true;
            for e in entries.clone() {
                let v = &e.context.values[attribute];
                match (left.bounds[attribute].contains(v)?, right.bounds[attribute].contains(v)?) {
                    (true, false) => left_entries.push(e),
                    (false, true) => right_entries.push(e),
                    _ => exact = false,
                }
            }
            if !exact {
                continue;
            }
            let gain = parent_entropy
                - (state_entropy(left_entries.iter().copied())
                    + state_entropy(right_entries.iter().copied()));
            out.push(SplitCandidate { rule, left, right, gain });
        }
    }
    Ok(out)
}

/// The candidate with the largest gain; the earliest one wins ties.
pub fn best_split(candidates: Vec<SplitCandidate>) -> Option<SplitCandidate> {
    let mut best: Option<SplitCandidate> = None;
    for c in candidates {
        if best.as_ref().is_none_or(|b| c.gain > b.gain) {
            best = Some(c);
        }
    }
    best
}

fn child(schema: &ContextSchema, parent: &State, attribute: usize, bound: ContextBound) -> Result<State> {
    let mut bounds = parent.bounds.clone();
    bounds[attribute] = bound;
    let values = bounds
        .iter()
        .zip(&parent.mid.values)
        .map(|(b, preferred)| bound_midpoint(b, preferred))
        .collect();
    let mid = ContextSnapshot::new(values, parent.mid.timestamp);
    State::from_bounds(schema, 0, bounds, mid, parent.created_at)
}

fn cut_points(lo: f64, width: f64, split_points: usize) -> impl Iterator<Item = f64> {
    (1..=split_points).map(move |j| lo + width * j as f64 / (split_points + 1) as f64)
}

fn attribute_splits(
    attribute: usize,
    bound: &ContextBound,
    split_points: usize,
) -> Vec<(SplitRule, ContextBound, ContextBound)> {
    let mut out = Vec::new();
    match bound {
        ContextBound::Numeric { lo, hi } => {
            if hi > lo {
                for at in cut_points(*lo, hi - lo, split_points) {
                    if at <= *lo || at > *hi {
                        continue;
                    }
                    out.push((
                        SplitRule::Cut { attribute, dim: None, at },
                        ContextBound::Numeric { lo: *lo, hi: at.next_down() },
                        ContextBound::Numeric { lo: at, hi: *hi },
                    ));
                }
            }
        }
        ContextBound::Cyclic { lo, width, period } => {
            if *width > 0.0 {
                for offset in cut_points(0.0, *width, split_points) {
                    let right_width = if *width >= *period {
                        // the full circle: keep `lo` out of the right child
                        (width - offset).next_down()
                    } else {
                        width - offset
                    };
                    out.push((
                        SplitRule::Cut { attribute, dim: None, at: wrap(lo + offset, *period) },
                        ContextBound::Cyclic { lo: *lo, width: offset.next_down(), period: *period },
                        ContextBound::Cyclic {
                            lo: wrap(lo + offset, *period),
                            width: right_width,
                            period: *period,
                        },
                    ));
                }
            }
        }
        ContextBound::Vector { ranges } => {
            for (dim, [lo, hi]) in ranges.iter().enumerate() {
                if hi <= lo {
                    continue;
                }
                for at in cut_points(*lo, hi - lo, split_points) {
                    if at <= *lo || at > *hi {
                        continue;
                    }
                    let mut left = ranges.clone();
                    let mut right = ranges.clone();
                    left[dim][1] = at.next_down();
                    right[dim][0] = at;
                    out.push((
                        SplitRule::Cut { attribute, dim: Some(dim), at },
                        ContextBound::Vector { ranges: left },
                        ContextBound::Vector { ranges: right },
                    ));
                }
            }
        }
        ContextBound::Categorical { labels } => {
            if labels.len() >= 2 {
                for label in labels {
                    let mut single = BTreeSet::new();
                    single.insert(label.clone());
                    let mut rest = labels.clone();
                    rest.remove(label);
                    out.push((
                        SplitRule::Category { attribute, label: label.clone() },
                        ContextBound::Categorical { labels: single },
                        ContextBound::Categorical { labels: rest },
                    ));
                }
            }
        }
    }
    out
}
