//! Context abstractions and the distance/containment functions over them.
//!
//! Four attribute kinds are supported: plain numeric values with a declared
//! range, cyclic numeric values that roll over (time of day), fixed-length
//! vectors (coordinates) and categorical labels. Every elemental distance is
//! normalized to `[0, 1]`; the snapshot distance is the weighted Manhattan sum
//! of the elemental distances.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kind-specific parameters of one context attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AttributeKind {
    #[serde(rename = "numeric")]
    Numeric { min: f64, max: f64 },
    #[serde(rename = "cyclic-numeric")]
    Cyclic { period: f64 },
    #[serde(rename = "vector-n")]
    Vector { dims: usize, ranges: Vec<[f64; 2]> },
    #[serde(rename = "categorical")]
    Categorical { labels: Vec<String> },
}

impl AttributeKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttributeKind::Numeric { .. } => "numeric",
            AttributeKind::Cyclic { .. } => "cyclic-numeric",
            AttributeKind::Vector { .. } => "vector-n",
            AttributeKind::Categorical { .. } => "categorical",
        }
    }

    /// True for every kind that is split along cut points rather than labels.
    pub fn is_continuous(&self) -> bool {
        !matches!(self, AttributeKind::Categorical { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDescriptor {
    pub name: String,
    #[serde(flatten)]
    pub kind: AttributeKind,
}

impl AttributeDescriptor {
    pub fn numeric(name: impl Into<String>, min: f64, max: f64) -> Self {
        Self { name: name.into(), kind: AttributeKind::Numeric { min, max } }
    }

    pub fn cyclic(name: impl Into<String>, period: f64) -> Self {
        Self { name: name.into(), kind: AttributeKind::Cyclic { period } }
    }

    pub fn vector(name: impl Into<String>, ranges: Vec<[f64; 2]>) -> Self {
        Self { name: name.into(), kind: AttributeKind::Vector { dims: ranges.len(), ranges } }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        labels: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Categorical { labels: labels.into_iter().map(Into::into).collect() },
        }
    }

    fn invalid(&self, reason: &'static str) -> Error {
        Error::InvalidDescriptor { attribute: self.name.clone(), reason }
    }

    fn mismatch(&self) -> Error {
        Error::TypeMismatch { attribute: self.name.clone(), expected: self.kind.name() }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            AttributeKind::Numeric { min, max } => {
                if !(min.is_finite() && max.is_finite() && max > min) {
                    return Err(self.invalid("numeric range needs finite max > min"));
                }
            }
            AttributeKind::Cyclic { period } => {
                if !(period.is_finite() && *period > 0.0) {
                    return Err(self.invalid("cyclic period must be positive"));
                }
            }
            AttributeKind::Vector { dims, ranges } => {
                if *dims == 0 {
                    return Err(self.invalid("vector dimension must be at least 1"));
                }
                if ranges.len() != *dims {
                    return Err(self.invalid("vector needs one range per dimension"));
                }
                if ranges.iter().any(|[lo, hi]| !(lo.is_finite() && hi.is_finite() && hi > lo)) {
                    return Err(self.invalid("vector ranges need finite upper > lower"));
                }
            }
            AttributeKind::Categorical { labels } => {
                if labels.is_empty() {
                    return Err(self.invalid("categorical label set is empty"));
                }
                let unique: BTreeSet<&String> = labels.iter().collect();
                if unique.len() != labels.len() {
                    return Err(self.invalid("categorical labels must be unique"));
                }
            }
        }
        Ok(())
    }

    /// Brings a raw value into canonical form: numeric values are clamped to
    /// the declared range, cyclic values reduced modulo the period, and labels
    /// checked against the label set.
    pub fn conform(&self, value: ContextValue) -> Result<ContextValue> {
        match (&self.kind, value) {
            (AttributeKind::Numeric { min, max }, ContextValue::Scalar(x)) if x.is_finite() => {
                Ok(ContextValue::Scalar(x.clamp(*min, *max)))
            }
            (AttributeKind::Cyclic { period }, ContextValue::Scalar(x)) if x.is_finite() => {
                Ok(ContextValue::Scalar(wrap(x, *period)))
            }
            (AttributeKind::Vector { ranges, .. }, ContextValue::Vector(xs))
                if xs.len() == ranges.len() && xs.iter().all(|x| x.is_finite()) =>
            {
                Ok(ContextValue::Vector(
                    xs.iter().zip(ranges).map(|(x, [lo, hi])| x.clamp(*lo, *hi)).collect(),
                ))
            }
            (AttributeKind::Categorical { labels }, ContextValue::Label(l)) => {
                if labels.contains(&l) {
                    Ok(ContextValue::Label(l))
                } else {
                    Err(Error::UnknownLabel { attribute: self.name.clone(), label: l })
                }
            }
            _ => Err(self.mismatch()),
        }
    }

    /// Normalized distance between two values of this attribute, in `[0, 1]`.
    #[inline]
    pub fn distance(&self, a: &ContextValue, b: &ContextValue) -> Result<f64> {
        match (&self.kind, a, b) {
            (AttributeKind::Numeric { min, max }, ContextValue::Scalar(x), ContextValue::Scalar(y)) => {
                let d = (x.clamp(*min, *max) - y.clamp(*min, *max)).abs() / (max - min);
                Ok(d.min(1.0))
            }
            (AttributeKind::Cyclic { period }, ContextValue::Scalar(x), ContextValue::Scalar(y)) => {
                Ok(cyclic_gap(*x, *y, *period) / (period / 2.0))
            }
            (AttributeKind::Vector { ranges, .. }, ContextValue::Vector(xs), ContextValue::Vector(ys))
                if xs.len() == ranges.len() && ys.len() == ranges.len() =>
            {
                let sq: f64 = xs
                    .iter()
                    .zip(ys)
                    .zip(ranges)
                    .map(|((x, y), [lo, hi])| {
                        let d = (x.clamp(*lo, *hi) - y.clamp(*lo, *hi)) / (hi - lo);
                        d * d
                    })
                    .sum();
                Ok((libm::sqrt(sq) / libm::sqrt(ranges.len() as f64)).min(1.0))
            }
            (AttributeKind::Categorical { .. }, ContextValue::Label(x), ContextValue::Label(y)) => {
                Ok(if x == y { 0.0 } else { 1.0 })
            }
            _ => Err(self.mismatch()),
        }
    }

    /// Distance from a bound's representative point to a value. Continuous
    /// kinds measure against `mid`; categorical bounds are sets, so the
    /// distance is 0 for members and 1 otherwise.
    #[inline]
    pub fn distance_to_bound(
        &self,
        bound: &ContextBound,
        mid: &ContextValue,
        value: &ContextValue,
    ) -> Result<f64> {
        // Only categorical bounds are read; continuous kinds never touch them.
        if !matches!(self.kind, AttributeKind::Categorical { .. }) {
            return self.distance(mid, value);
        }
        match (bound, value) {
            (ContextBound::Categorical { labels }, ContextValue::Label(l)) => {
                Ok(if labels.contains(l) { 0.0 } else { 1.0 })
            }
            _ => Err(self.mismatch()),
        }
    }

    /// Normalized extent of a bound, i.e. the elemental distance between its
    /// lower and upper corner. Cyclic extents saturate at half a period.
    pub fn bound_extent(&self, bound: &ContextBound) -> Result<f64> {
        match (&self.kind, bound) {
            (AttributeKind::Numeric { min, max }, ContextBound::Numeric { lo, hi }) => {
                Ok(((hi - lo) / (max - min)).clamp(0.0, 1.0))
            }
            (AttributeKind::Cyclic { period }, ContextBound::Cyclic { width, .. }) => {
                Ok((width / (period / 2.0)).clamp(0.0, 1.0))
            }
            (AttributeKind::Vector { ranges, .. }, ContextBound::Vector { ranges: b })
                if b.len() == ranges.len() =>
            {
                let sq: f64 = b
                    .iter()
                    .zip(ranges)
                    .map(|([lo, hi], [rlo, rhi])| {
                        let d = (hi - lo) / (rhi - rlo);
                        d * d
                    })
                    .sum();
                Ok((libm::sqrt(sq) / libm::sqrt(ranges.len() as f64)).min(1.0))
            }
            (AttributeKind::Categorical { .. }, ContextBound::Categorical { labels }) => {
                Ok(if labels.len() > 1 { 1.0 } else { 0.0 })
            }
            _ => Err(self.mismatch()),
        }
    }
}

/// Reduces `x` into `[0, period)`.
pub(crate) fn wrap(x: f64, period: f64) -> f64 {
    let r = libm::fmod(x, period);
    let r = if r < 0.0 { r + period } else { r };
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Shortest distance around the circle, in `[0, period / 2]`.
pub(crate) fn cyclic_gap(x: f64, y: f64, period: f64) -> f64 {
    let d = (wrap(x, period) - wrap(y, period)).abs();
    d.min(period - d).max(0.0)
}

/// One context value. Numeric and cyclic attributes both hold scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ContextValue {
    Scalar(f64),
    Vector(Vec<f64>),
    Label(String),
}

impl ContextValue {
    pub fn label(s: impl Into<String>) -> Self {
        ContextValue::Label(s.into())
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            ContextValue::Scalar(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            ContextValue::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            ContextValue::Label(l) => Some(l),
            _ => None,
        }
    }
}

/// Ordered attribute list. Attribute 0 is the user identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AttributeDescriptor>", into = "Vec<AttributeDescriptor>")]
pub struct ContextSchema {
    attributes: Vec<AttributeDescriptor>,
}

impl TryFrom<Vec<AttributeDescriptor>> for ContextSchema {
    type Error = Error;

    fn try_from(attributes: Vec<AttributeDescriptor>) -> Result<Self> {
        Self::new(attributes)
    }
}

impl From<ContextSchema> for Vec<AttributeDescriptor> {
    fn from(schema: ContextSchema) -> Self {
        schema.attributes
    }
}

impl ContextSchema {
    pub fn new(attributes: Vec<AttributeDescriptor>) -> Result<Self> {
        let mut names = BTreeSet::new();
        for attr in &attributes {
            attr.validate()?;
            if !names.insert(attr.name.as_str()) {
                return Err(Error::DuplicateAttribute(attr.name.clone()));
            }
        }
        if let Some(first) = attributes.first() {
            if !matches!(first.kind, AttributeKind::Categorical { .. }) {
                return Err(Error::IdentityNotCategorical);
            }
        }
        Ok(Self { attributes })
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attributes(&self) -> &[AttributeDescriptor] {
        &self.attributes
    }

    pub fn attribute(&self, index: usize) -> Option<&AttributeDescriptor> {
        self.attributes.get(index)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Builds a snapshot, conforming every value to its descriptor.
    pub fn snapshot(&self, values: Vec<ContextValue>, timestamp: i64) -> Result<ContextSnapshot> {
        self.check_len(values.len())?;
        let values = self
            .attributes
            .iter()
            .zip(values)
            .map(|(desc, v)| desc.conform(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(ContextSnapshot { values, timestamp })
    }

    /// Re-conforms an existing snapshot (e.g. one read from disk).
    pub fn conform(&self, snapshot: &ContextSnapshot) -> Result<ContextSnapshot> {
        self.snapshot(snapshot.values.clone(), snapshot.timestamp)
    }

    pub(crate) fn check_len(&self, found: usize) -> Result<()> {
        if found != self.attributes.len() {
            return Err(Error::Schema { expected: self.attributes.len(), found });
        }
        Ok(())
    }

    /// Weighted Manhattan distance `sum_i w_i * dist(a_i, b_i)`.
    pub fn distance(
        &self,
        a: &ContextSnapshot,
        b: &ContextSnapshot,
        weights: &WeightVector,
    ) -> Result<f64> {
        self.check_len(a.values.len())?;
        self.check_len(b.values.len())?;
        self.check_len(weights.len())?;
        let mut total = 0.0;
        for ((desc, w), (x, y)) in
            self.attributes.iter().zip(weights.as_slice()).zip(a.values.iter().zip(&b.values))
        {
            total += w * desc.distance(x, y)?;
        }
        Ok(total)
    }
}

/// The context vector observed at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSnapshot {
    pub values: Vec<ContextValue>,
    /// Microseconds since the Unix epoch.
    #[serde(default)]
    pub timestamp: i64,
}

impl ContextSnapshot {
    pub fn new(values: Vec<ContextValue>, timestamp: i64) -> Self {
        Self { values, timestamp }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-attribute weights, each strictly inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) =
            weights.iter().enumerate().find(|(_, w)| !(**w > 0.0 && **w < 1.0))
        {
            return Err(Error::InvalidWeight { index, value });
        }
        Ok(Self(weights))
    }

    /// `1/n` per attribute. A single-attribute schema gets 0.5, since 1.0 is
    /// outside the open interval.
    pub fn uniform(n: usize) -> Self {
        let w = if n <= 1 { 0.5 } else { 1.0 / n as f64 };
        Self(alloc::vec![w; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Lower/upper bound of one attribute inside a state.
///
/// Cyclic bounds are stored as a start point plus a width measured forward
/// around the circle, so `[84900, 2100]` over a day is `lo = 84900,
/// width = 3600`. A width equal to the period covers the whole circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ContextBound {
    #[serde(rename = "numeric")]
    Numeric { lo: f64, hi: f64 },
    #[serde(rename = "cyclic-numeric")]
    Cyclic { lo: f64, width: f64, period: f64 },
    #[serde(rename = "vector-n")]
    Vector { ranges: Vec<[f64; 2]> },
    #[serde(rename = "categorical")]
    Categorical { labels: BTreeSet<String> },
}

impl ContextBound {
    /// Cyclic bound from its two endpoints; `lo > hi` wraps through zero.
    pub fn cyclic(lo: f64, hi: f64, period: f64) -> Self {
        let lo = wrap(lo, period);
        ContextBound::Cyclic { lo, width: wrap(hi - lo, period), period }
    }

    pub fn labels<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        ContextBound::Categorical { labels: labels.into_iter().map(Into::into).collect() }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ContextBound::Numeric { .. } => "numeric",
            ContextBound::Cyclic { .. } => "cyclic-numeric",
            ContextBound::Vector { .. } => "vector-n",
            ContextBound::Categorical { .. } => "categorical",
        }
    }

    /// Upper endpoint of a cyclic bound, reduced into `[0, period)`.
    pub fn cyclic_hi(&self) -> Option<f64> {
        match self {
            ContextBound::Cyclic { lo, width, period } => Some(wrap(lo + width, *period)),
            _ => None,
        }
    }

    #[inline]
    pub fn contains(&self, value: &ContextValue) -> Result<bool> {
        match (self, value) {
            (ContextBound::Numeric { lo, hi }, ContextValue::Scalar(x)) => Ok(lo <= x && x <= hi),
            (ContextBound::Cyclic { lo, width, period }, ContextValue::Scalar(x)) => {
                Ok(wrap(x - lo, *period) <= *width)
            }
            (ContextBound::Vector { ranges }, ContextValue::Vector(xs)) if xs.len() == ranges.len() => {
                Ok(xs.iter().zip(ranges).all(|(x, [lo, hi])| lo <= x && x <= hi))
            }
            (ContextBound::Categorical { labels }, ContextValue::Label(l)) => Ok(labels.contains(l)),
            _ => Err(Error::TypeMismatch {
                attribute: "bound".to_string(),
                expected: self.kind_name(),
            }),
        }
    }
}

/// True iff every element of `snapshot` lies inside its bound.
pub fn snapshot_contains(bounds: &[ContextBound], snapshot: &ContextSnapshot) -> Result<bool> {
    if bounds.len() != snapshot.values.len() {
        return Err(Error::Schema { expected: bounds.len(), found: snapshot.values.len() });
    }
    for (bound, value) in bounds.iter().zip(&snapshot.values) {
        if !bound.contains(value)? {
            return Ok(false);
        }
    }
    Ok(true)
}
