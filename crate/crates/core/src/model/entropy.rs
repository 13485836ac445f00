use alloc::collections::BTreeMap;

use super::FeedbackEntry;
use crate::ids::ActionId;

/// `-p log2 p - (1-p) log2 (1-p)` with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    fn term(x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -x * libm::log2(x)
        }
    }
    term(p) + term(1.0 - p)
}

/// Maximum per-action binary entropy of the positive/negative feedback split.
/// Actions without entries do not contribute; an empty cache has entropy 0.
pub fn state_entropy<'a, I>(entries: I) -> f64
where
    I: IntoIterator<Item = &'a FeedbackEntry>,
{
    let mut counts: BTreeMap<&ActionId, (u32, u32)> = BTreeMap::new();
    for e in entries {
        if let Some(action) = e.proposal.action.as_ref() {
            let c = counts.entry(action).or_default();
            c.1 += 1;
            if e.positive {
                c.0 += 1;
            }
        }
    }
    counts
        .values()
        .map(|&(pos, total)| binary_entropy(f64::from(pos) / f64::from(total)))
        .fold(0.0, f64::max)
}
