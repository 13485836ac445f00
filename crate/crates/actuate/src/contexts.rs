//! Derived context streams and request traces built from raw events.

use std::fmt;
use std::str::FromStr;

use actuate_core::{AttributeDescriptor, ContextSchema, ContextValue, Request};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::casas::RawEvent;
use crate::sensor_map::{Role, SensorMap};
use crate::timefmt;
use crate::trace::{Truth, TraceRecord};
use crate::{Error, Result};

pub const DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocationMode {
    #[default]
    Categorical,
    Coordinate,
}

impl FromStr for LocationMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "categorical" => Ok(LocationMode::Categorical),
            "coordinate" => Ok(LocationMode::Coordinate),
            _ => Err(format!("unknown location mode `{s}` (categorical|coordinate)")),
        }
    }
}

impl fmt::Display for LocationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LocationMode::Categorical => "categorical",
            LocationMode::Coordinate => "coordinate",
        })
    }
}

/// How much of the ground truth a generated request reveals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Specificity {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "action")]
    Action,
    #[serde(rename = "class+action")]
    ClassAction,
}

impl Specificity {
    pub fn request(self, class: &str, action: &str) -> Request {
        match self {
            Specificity::None => Request::act(),
            Specificity::Action => Request::new(None, Some(action)),
            Specificity::ClassAction => Request::new(Some(class), Some(action)),
        }
    }
}

impl FromStr for Specificity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Specificity::None),
            "action" => Ok(Specificity::Action),
            "class+action" => Ok(Specificity::ClassAction),
            _ => Err(format!("unknown specificity `{s}` (none|action|class+action)")),
        }
    }
}

impl fmt::Display for Specificity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Specificity::None => "none",
            Specificity::Action => "action",
            Specificity::ClassAction => "class+action",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unmapped {
    #[default]
    Skip,
    Abort,
}

impl FromStr for Unmapped {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "skip" => Ok(Unmapped::Skip),
            "abort" => Ok(Unmapped::Abort),
            _ => Err(format!("unknown policy `{s}` (skip|abort)")),
        }
    }
}

/// `user, location, prev_location, second_of_day`.
pub fn schema(map: &SensorMap, mode: LocationMode, user: &str) -> Result<ContextSchema> {
    let location = |name: &str| -> Result<AttributeDescriptor> {
        Ok(match mode {
            LocationMode::Categorical => AttributeDescriptor::categorical(name, map.location_labels()),
            LocationMode::Coordinate => {
                map.require_coordinates()?;
                AttributeDescriptor::vector(name, map.coordinate_extent().to_vec())
            }
        })
    };
    Ok(ContextSchema::new(vec![
        AttributeDescriptor::categorical("user", [user]),
        location("location")?,
        location("prev_location")?,
        AttributeDescriptor::cyclic("second_of_day", DAY),
    ])?)
}

#[derive(Debug, Clone, PartialEq)]
struct Change {
    t: i64,
    location: ContextValue,
    prev: ContextValue,
}

/// Location history sampled on demand. Values at `t` come from the latest
/// change at or before `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextStream {
    user: String,
    initial: ContextValue,
    changes: Vec<Change>,
}

impl ContextStream {
    pub fn len(&self) -> usize {
        self.changes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }

    /// Context values at `t` (microseconds since the epoch).
    pub fn values_at(&self, t: i64) -> Vec<ContextValue> {
        let n = self.changes.partition_point(|c| c.t <= t);
        let (location, prev) = match n {
            0 => (self.initial.clone(), self.initial.clone()),
            _ => (self.changes[n - 1].location.clone(), self.changes[n - 1].prev.clone()),
        };
        let sod = timefmt::from_micros(t).map(|d| timefmt::second_of_day(&d)).unwrap_or(0.0);
        vec![ContextValue::label(&self.user), location, prev, ContextValue::Scalar(sod)]
    }
}

fn location_value(map: &SensorMap, sensor: &str, mode: LocationMode) -> ContextValue {
    match mode {
        LocationMode::Categorical => ContextValue::Label(map.label(sensor)),
        LocationMode::Coordinate => {
            ContextValue::Vector(map.get(sensor).and_then(|s| s.coords).map(|c| c.to_vec()).unwrap_or_default())
        }
    }
}

fn unknown_location(map: &SensorMap, mode: LocationMode) -> ContextValue {
    match mode {
        LocationMode::Categorical => ContextValue::Label(map.unknown_label.clone()),
        LocationMode::Coordinate => {
            ContextValue::Vector(map.coordinate_extent().iter().map(|r| (r[0] + r[1]) / 2.0).collect())
        }
    }
}

/// Sorts `events` by time, keeping the input order among equal timestamps.
pub fn sort_events(events: &mut [RawEvent]) {
    events.sort_by_key(|e| e.t);
}

/// Tracks the most recently activated (`location`) and de-activated
/// (`prev_location`) motion sensors. `events` must be time ordered.
pub fn derive_contexts(
    events: &[RawEvent],
    map: &SensorMap,
    mode: LocationMode,
    user: &str,
    unmapped: Unmapped,
) -> Result<ContextStream> {
    if mode == LocationMode::Coordinate {
        map.require_coordinates()?;
    }
    let initial = unknown_location(map, mode);
    let mut location = initial.clone();
    let mut prev = initial.clone();
    let mut changes: Vec<Change> = Vec::new();
    for e in events {
        let Some(info) = map.get(&e.sensor) else {
            match unmapped {
                Unmapped::Skip => continue,
                Unmapped::Abort => return Err(Error::Config(format!("unmapped sensor `{}`", e.sensor))),
            }
        };
        if info.role != Role::Motion {
            continue;
        }
        if map.motion_on.contains(&e.value) {
            location = location_value(map, &e.sensor, mode);
        } else if map.motion_off.contains(&e.value) {
            prev = location_value(map, &e.sensor, mode);
        } else {
            continue;
        }
        let t = timefmt::micros(&e.t);
        let change = Change { t, location: location.clone(), prev: prev.clone() };
        match changes.last_mut() {
            Some(last) if last.t == t => *last = change,
            _ => changes.push(change),
        }
    }
    Ok(ContextStream { user: user.to_string(), initial, changes })
}

/// One record per mapped device event. `events` must be time ordered.
pub fn build_request_trace(
    events: &[RawEvent],
    contexts: &ContextStream,
    map: &SensorMap,
    specificity: Specificity,
) -> Vec<TraceRecord> {
    let mut out = Vec::new();
    for e in events {
        let Some(info) = map.get(&e.sensor) else { continue };
        if info.role == Role::Motion {
            continue;
        }
        let (Some(device), Some(action)) = (&info.device, map.device_action(info, &e.value)) else {
            warn!("{} {} {}: no device action mapped; skipped", timefmt::format(&e.t), e.sensor, e.value);
            continue;
        };
        let class = SensorMap::class_of(info);
        out.push(TraceRecord {
            t: e.t,
            context: contexts.values_at(timefmt::micros(&e.t)),
            request: specificity.request(&class, action.as_str()).into(),
            truth: Truth { device: device.clone(), action },
        });
    }
    out
}
