use crate::error::{Error, Result};

/// Utilities are kept within `sigmoid(+-MAX_LOGIT)` so they never round to
/// exactly 0 or 1 in `f64`.
pub const MAX_LOGIT: f64 = 30.0;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

pub fn logit(u: f64) -> f64 {
    libm::log(u / (1.0 - u))
}

/// Moves a utility by `delta` in logit space: up for positive feedback, down
/// for negative. Updates are large near 0.5 and shrink towards 0 and 1.
///
/// The logit is capped at `MAX_LOGIT` in either direction; an update never
/// moves a utility backwards past the cap.
pub fn sigmoid_reward(u: f64, delta: f64, positive: bool) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain("utility must lie strictly inside (0, 1)"));
    }
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::Domain("reward step must be finite and non-negative"));
    }
    let l = logit(u);
    let x = if positive {
        (l + delta).min(MAX_LOGIT.max(l))
    } else {
        (l - delta).max((-MAX_LOGIT).min(l))
    };
    Ok(sigmoid(x))
}
