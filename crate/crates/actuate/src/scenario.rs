//! Seeded generator for synthetic single-resident home traces.
//!
//! A day is a sequence of activities, each in a room. Starting an activity
//! asks for one action on its device and ending it asks for another. The
//! mapping from activity to device never changes, so a learner can reach
//! near-perfect accuracy on it.

use std::collections::{BTreeMap, BTreeSet};

use actuate_core::{
    ActionId, AttributeDescriptor, ClassDecl, ContextSchema, ContextValue, DeviceId, DeviceSpec, Registry,
};
use chrono::NaiveDateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::contexts::{LocationMode, Specificity, DAY};
use crate::trace::{Trace, TraceHeader, TraceRecord, Truth};
use crate::{timefmt, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub name: String,
    /// `[x0, y0, x1, y1]`.
    pub rect: [f64; 4],
    /// Number of motion sensors, laid out on a grid.
    pub sensors: usize,
    /// Device used by activities that do not name one.
    pub light: DeviceId,
}

impl Room {
    fn centre(&self) -> [f64; 2] {
        [(self.rect[0] + self.rect[2]) / 2.0, (self.rect[1] + self.rect[3]) / 2.0]
    }

    fn sensor_positions(&self) -> Vec<[f64; 2]> {
        let [x0, y0, x1, y1] = self.rect;
        let (w, h) = (x1 - x0, y1 - y0);
        let (cols, rows) = match self.sensors {
            4 => (2, 2),
            n if w >= h => (n, 1),
            n => (1, n),
        };
        let mut out = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                out.push([x0 + w * (c as f64 + 0.5) / cols as f64, y0 + h * (r as f64 + 0.5) / rows as f64]);
            }
        }
        out
    }
}

/// Normal distribution in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Minutes {
    pub mean: f64,
    #[serde(default)]
    pub sd: f64,
}

impl Minutes {
    const fn new(mean: f64, sd: f64) -> Self {
        Self { mean, sd }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.sd > 0.0 {
            Normal::new(self.mean, self.sd).expect("finite sd").sample(rng)
        } else {
            self.mean
        }
    }
}

fn turn_on() -> Option<ActionId> {
    Some("turnOn".into())
}

fn turn_off() -> Option<ActionId> {
    Some("turnOff".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySpec {
    pub name: String,
    /// One is picked uniformly each time.
    pub rooms: Vec<String>,
    /// Preferred start, minutes after midnight.
    pub start: Minutes,
    pub duration: Minutes,
    pub probability: f64,
    /// Overrides the room's device.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<DeviceId>,
    #[serde(default = "turn_on")]
    pub start_action: Option<ActionId>,
    #[serde(default = "turn_off")]
    pub end_action: Option<ActionId>,
    /// Placed at its preferred time, regardless of the other activities.
    #[serde(default)]
    pub overlay: bool,
    /// The resident is away from the end of this activity until the named
    /// one starts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub away_until: Option<String>,
    /// Only happens as the end of an absence.
    #[serde(default)]
    pub returns: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extra {
    pub device: DeviceId,
    pub action: ActionId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WakeUp {
    /// Activity after which the record is added.
    pub after: String,
    #[serde(flatten)]
    pub target: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Daily {
    /// Minutes after midnight.
    pub at: f64,
    #[serde(flatten)]
    pub target: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Doorbell {
    pub per_day: f64,
    /// Window in minutes after midnight.
    pub from: f64,
    pub to: f64,
    #[serde(flatten)]
    pub target: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub days: usize,
    /// First day, `YYYY-MM-DD`.
    pub start_date: String,
    pub user: String,
    #[serde(default)]
    pub location_mode: LocationMode,
    pub specificity: Specificity,
    /// `[[x_min, x_max], [y_min, y_max]]`.
    pub extent: [[f64; 2]; 2],
    pub rooms: Vec<Room>,
    pub registry: Registry,
    pub activities: Vec<ActivitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wake_up: Option<WakeUp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evening_news: Option<Daily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doorbell: Option<Doorbell>,
}

fn light(id: &str, room: &[f64; 4]) -> DeviceSpec {
    let mut d = DeviceSpec::local(id, ["light"], ["turnOff", "turnOn"]);
    d.location = Some(vec![(room[0] + room[2]) / 2.0, (room[1] + room[3]) / 2.0]);
    d
}

fn activity(name: &str, rooms: &[&str], start: (f64, f64), duration: (f64, f64), probability: f64) -> ActivitySpec {
    ActivitySpec {
        name: name.into(),
        rooms: rooms.iter().map(|r| r.to_string()).collect(),
        start: Minutes::new(start.0, start.1),
        duration: Minutes::new(duration.0, duration.1),
        probability,
        device: None,
        start_action: turn_on(),
        end_action: turn_off(),
        overlay: false,
        away_until: None,
        returns: false,
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let rect = |name: &str, r: [f64; 4], sensors: usize, light: &str| Room {
            name: name.into(),
            rect: r,
            sensors,
            light: light.into(),
        };
        let rooms = vec![
            rect("living", [0.0, 0.0, 5.0, 5.0], 4, "living_light"),
            rect("bedroom", [0.0, 5.0, 4.0, 9.0], 3, "bedroom_light"),
            rect("bathroom", [4.0, 5.0, 6.0, 9.0], 2, "bathroom_light"),
            rect("office", [6.0, 6.0, 9.0, 9.0], 2, "office_light"),
            rect("dining", [5.0, 2.0, 8.0, 6.0], 3, "dining_light"),
            rect("kitchen", [8.0, 2.0, 12.0, 6.0], 3, "kitchen_light"),
            rect("entry", [8.0, 0.0, 12.0, 2.0], 2, "doorway_light"),
        ];
        let mut devices: Vec<DeviceSpec> = rooms.iter().map(|r| light(r.light.as_str(), &r.rect)).collect();
        for (id, room) in [("bedroom_speaker", 1), ("living_speaker", 0)] {
            let mut d = DeviceSpec::local(id, ["speaker"], ["playMusic", "turnOff", "turnOn"]);
            d.location = Some(rooms[room].centre().to_vec());
            devices.push(d);
        }
        let mut camera = DeviceSpec::local("doorbell_camera", ["camera"], ["turnOff", "turnOn"]);
        camera.location = Some(rooms[6].centre().to_vec());
        devices.push(camera);
        devices.sort_by(|a, b| a.id.cmp(&b.id));
        let registry = Registry {
            classes: ["camera", "light", "speaker"].iter().map(|c| ClassDecl { id: (*c).into(), parent: None }).collect(),
            devices,
        };

        let mut activities = vec![
            ActivitySpec { overlay: true, ..activity("Bed_Toilet_Transition", &["bathroom"], (180.0, 60.0), (4.0, 1.0), 0.4) },
            activity("Toilet", &["bathroom"], (395.0, 10.0), (4.0, 1.0), 0.5),
            activity("Personal_Hygiene", &["bathroom"], (405.0, 15.0), (12.0, 4.0), 0.95),
            activity("Dress", &["bedroom"], (425.0, 10.0), (8.0, 2.0), 0.9),
            activity("Cook_Breakfast", &["kitchen"], (440.0, 10.0), (15.0, 4.0), 0.85),
            activity("Eat_Breakfast", &["dining"], (460.0, 10.0), (18.0, 5.0), 0.85),
            activity("Wash_Breakfast_Dishes", &["kitchen"], (480.0, 10.0), (8.0, 2.0), 0.6),
            activity("Take_Medicine", &["kitchen"], (492.0, 10.0), (3.0, 1.0), 0.8),
            ActivitySpec {
                away_until: Some("Enter_Home".into()),
                ..activity("Leave_Home", &["entry"], (515.0, 20.0), (3.0, 1.0), 0.55)
            },
            activity("Work_On_Computer", &["office"], (560.0, 30.0), (110.0, 30.0), 0.7),
            activity("Read", &["living", "bedroom"], (690.0, 20.0), (40.0, 10.0), 0.4),
            activity("Cook_Lunch", &["kitchen"], (720.0, 15.0), (20.0, 5.0), 0.8),
            activity("Eat_Lunch", &["dining"], (745.0, 10.0), (25.0, 5.0), 0.8),
            activity("Wash_Lunch_Dishes", &["kitchen"], (775.0, 10.0), (10.0, 3.0), 0.6),
            activity("Work_At_Table", &["dining"], (810.0, 20.0), (60.0, 20.0), 0.5),
            activity("Phone", &["living"], (880.0, 30.0), (15.0, 5.0), 0.4),
            activity("Toilet", &["bathroom"], (900.0, 40.0), (4.0, 1.0), 0.5),
            activity("Exercise", &["living"], (930.0, 30.0), (40.0, 10.0), 0.4),
            activity("Relax", &["living"], (990.0, 30.0), (40.0, 10.0), 0.5),
            ActivitySpec { returns: true, ..activity("Enter_Home", &["entry"], (1030.0, 30.0), (3.0, 1.0), 1.0) },
            activity("Cook_Dinner", &["kitchen"], (1080.0, 15.0), (30.0, 8.0), 0.85),
            activity("Eat_Dinner", &["dining"], (1115.0, 10.0), (30.0, 8.0), 0.85),
            activity("Wash_Dinner_Dishes", &["kitchen"], (1150.0, 10.0), (15.0, 4.0), 0.7),
            activity("Entertain_Guests", &["living"], (1170.0, 20.0), (60.0, 15.0), 0.15),
            ActivitySpec {
                device: Some("living_speaker".into()),
                ..activity("Watch_TV", &["living"], (1180.0, 20.0), (80.0, 20.0), 0.7)
            },
            activity("Read", &["bedroom"], (1290.0, 20.0), (30.0, 10.0), 0.5),
            activity("Bathe", &["bathroom"], (1320.0, 15.0), (20.0, 5.0), 0.5),
        ];
        activities.push(ActivitySpec {
            start_action: turn_off(),
            end_action: None,
            ..activity("Sleep", &["bedroom"], (1365.0, 20.0), (465.0, 20.0), 1.0)
        });

        Self {
            days: 196,
            start_date: "2011-06-15".into(),
            user: "resident".into(),
            location_mode: LocationMode::Coordinate,
            specificity: Specificity::ClassAction,
            extent: [[0.0, 12.0], [0.0, 9.0]],
            rooms,
            registry,
            activities,
            wake_up: Some(WakeUp {
                after: "Sleep".into(),
                target: Extra { device: "bedroom_speaker".into(), action: "playMusic".into() },
            }),
            evening_news: Some(Daily {
                at: 1080.0,
                target: Extra { device: "living_speaker".into(), action: "turnOn".into() },
            }),
            doorbell: Some(Doorbell {
                per_day: 0.4,
                from: 540.0,
                to: 1260.0,
                target: Extra { device: "doorbell_camera".into(), action: "turnOn".into() },
            }),
        }
    }
}

/// Motion sensor id and position, in room order.
#[derive(Debug, Clone, PartialEq)]
struct Sensor {
    id: String,
    room: usize,
    at: [f64; 2],
}

struct Event {
    /// Seconds after the start of day 0.
    t: i64,
    room: usize,
    truth: Truth,
}

impl ScenarioConfig {
    fn room_index(&self, name: &str) -> Result<usize> {
        self.rooms
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| Error::Config(format!("unknown room `{name}`")))
    }

    fn check_target(&self, what: &str, device: &DeviceId, action: &ActionId) -> Result<()> {
        let spec = self
            .registry
            .device(device)
            .ok_or_else(|| Error::Config(format!("{what}: device `{device}` is not in the registry")))?;
        if !spec.actions.contains(action) {
            return Err(Error::Config(format!("{what}: device `{device}` has no action `{action}`")));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.registry.hierarchy()?;
        if self.rooms.is_empty() {
            return Err(Error::Config("scenario has no rooms".into()));
        }
        for r in &self.rooms {
            if r.sensors == 0 || !(r.rect[2] > r.rect[0] && r.rect[3] > r.rect[1]) {
                return Err(Error::Config(format!("room `{}` needs a non-empty rectangle and a sensor", r.name)));
            }
        }
        for a in &self.activities {
            if a.rooms.is_empty() {
                return Err(Error::Config(format!("activity `{}` has no room", a.name)));
            }
            if !(0.0..=1.0).contains(&a.probability) || a.start.sd < 0.0 || a.duration.sd < 0.0 {
                return Err(Error::Config(format!("activity `{}` has an invalid distribution", a.name)));
            }
            for room in &a.rooms {
                let r = &self.rooms[self.room_index(room)?];
                let device = a.device.as_ref().unwrap_or(&r.light);
                for action in a.start_action.iter().chain(&a.end_action) {
                    self.check_target(&format!("activity `{}`", a.name), device, action)?;
                }
            }
            if let Some(back) = &a.away_until {
                if !self.activities.iter().any(|b| &b.name == back && b.returns) {
                    return Err(Error::Config(format!("activity `{}` never returns", a.name)));
                }
            }
        }
        if let Some(w) = &self.wake_up {
            self.check_target("wake-up", &w.target.device, &w.target.action)?;
        }
        if let Some(n) = &self.evening_news {
            self.check_target("evening news", &n.target.device, &n.target.action)?;
        }
        if let Some(d) = &self.doorbell {
            self.check_target("doorbell", &d.target.device, &d.target.action)?;
        }
        timefmt::parse(&format!("{}T00:00:00", self.start_date))
            .map_err(|e| Error::Config(format!("start_date: {e}")))?;
        Ok(())
    }

    fn sensors(&self) -> Vec<Sensor> {
        let mut out = Vec::new();
        for (i, r) in self.rooms.iter().enumerate() {
            for at in r.sensor_positions() {
                out.push(Sensor { id: format!("M{:03}", out.len() + 1), room: i, at });
            }
        }
        out
    }

    pub fn schema(&self) -> Result<ContextSchema> {
        let location = match self.location_mode {
            LocationMode::Coordinate => AttributeDescriptor::vector("location", self.extent.to_vec()),
            LocationMode::Categorical => {
                AttributeDescriptor::categorical("location", self.sensors().into_iter().map(|s| s.id))
            }
        };
        let mut prev = location.clone();
        prev.name = "prev_location".into();
        Ok(ContextSchema::new(vec![
            AttributeDescriptor::categorical("user", [self.user.as_str()]),
            location,
            prev,
            AttributeDescriptor::cyclic("second_of_day", DAY),
        ])?)
    }

    fn class_of(&self, device: &DeviceId) -> String {
        self.registry
            .device(device)
            .and_then(|d| d.classes.first())
            .map(|c| c.0.clone())
            .unwrap_or_default()
    }
}

/// Room of the latest activity started at or before `t`, if the resident is
/// home then.
fn room_at(t: i64, visits: &[(i64, i64, usize)], away: &[(i64, i64)]) -> Option<usize> {
    if away.iter().any(|&(a, b)| a <= t && t < b) {
        return None;
    }
    visits.iter().filter(|v| v.0 <= t).max_by_key(|v| v.0).map(|v| v.2)
}

fn schedule(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    let mut visits: Vec<(i64, i64, usize)> = Vec::new();
    let mut away: Vec<(i64, i64)> = Vec::new();
    let mut cursor = 6 * 3600;
    let min = |m: f64| (m * 60.0).round() as i64;
    let push = |events: &mut Vec<Event>, t: i64, room: usize, device: &DeviceId, action: &ActionId| {
        events.push(Event { t, room, truth: Truth { device: device.clone(), action: action.clone() } });
    };

    for day in 0..cfg.days as i64 {
        let base = day * 86_400;
        let mut away_until: Option<(&str, i64)> = None;
        for a in &cfg.activities {
            let happens = rng.random::<f64>() < a.probability;
            let room_pick = rng.random_range(0..a.rooms.len());
            let start_min = a.start.sample(rng);
            let duration = min(a.duration.sample(rng)).max(60);
            if let Some((back, _)) = away_until {
                if a.name != back {
                    continue;
                }
            } else if a.returns || !happens {
                continue;
            }
            let room = cfg.room_index(&a.rooms[room_pick])?;
            let device = a.device.clone().unwrap_or_else(|| cfg.rooms[room].light.clone());
            let preferred = base + min(start_min);
            let start = if a.overlay { preferred } else { preferred.max(cursor + 60) };
            let end = start + duration;
            if let Some((_, left)) = away_until.take() {
                away.push((left, start));
            }
            if let Some(action) = &a.start_action {
                push(&mut events, start, room, &device, action);
            }
            if let Some(action) = &a.end_action {
                push(&mut events, end, room, &device, action);
            }
            if !a.overlay {
                visits.push((start, end, room));
                cursor = end;
            }
            if let Some(w) = cfg.wake_up.as_ref().filter(|w| w.after == a.name) {
                push(&mut events, end, room, &w.target.device, &w.target.action);
            }
            if let Some(back) = &a.away_until {
                away_until = Some((back.as_str(), end));
            }
        }
    }

    for day in 0..cfg.days as i64 {
        let base = day * 86_400;
        if let Some(n) = &cfg.evening_news {
            let t = base + min(n.at);
            if let Some(room) = room_at(t, &visits, &away) {
                push(&mut events, t, room, &n.target.device, &n.target.action);
            }
        }
        if let Some(d) = &cfg.doorbell {
            let rings = rng.random::<f64>() < d.per_day;
            let t = base + min(rng.random_range(d.from..d.to));
            if let Some(room) = rings.then(|| room_at(t, &visits, &away)).flatten() {
                push(&mut events, t, room, &d.target.device, &d.target.action);
            }
        }
    }
    events.sort_by_key(|e| e.t);
    Ok(events)
}

/// Generates the trace for `cfg`. The same `(cfg, seed)` always gives the
/// same trace.
pub fn generate(cfg: &ScenarioConfig, seed: u64) -> Result<Trace> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events = schedule(cfg, &mut rng)?;
    let sensors = cfg.sensors();
    let day0: NaiveDateTime = timefmt::parse(&format!("{}T00:00:00", cfg.start_date))
        .map_err(|e| Error::Config(format!("start_date: {e}")))?;

    let mut records = Vec::with_capacity(events.len());
    let mut prev: Option<ContextValue> = None;
    for e in events {
        let r = &cfg.rooms[e.room].rect;
        let x = rng.random_range(r[0]..r[2]);
        let y = rng.random_range(r[1]..r[3]);
        let location = match cfg.location_mode {
            LocationMode::Coordinate => ContextValue::Vector(vec![x, y]),
            LocationMode::Categorical => {
                let nearest = sensors
                    .iter()
                    .min_by(|a, b| {
                        let d = |s: &Sensor| (s.at[0] - x).powi(2) + (s.at[1] - y).powi(2);
                        d(a).total_cmp(&d(b))
                    })
                    .expect("the scenario has sensors");
                ContextValue::label(&nearest.id)
            }
        };
        let prev_location = prev.replace(location.clone()).unwrap_or_else(|| location.clone());
        let t = day0 + chrono::Duration::seconds(e.t);
        let class = cfg.class_of(&e.truth.device);
        records.push(TraceRecord {
            t,
            context: vec![
                ContextValue::label(&cfg.user),
                location,
                prev_location,
                ContextValue::Scalar(timefmt::second_of_day(&t)),
            ],
            request: cfg.specificity.request(&class, e.truth.action.as_str()).into(),
            truth: e.truth,
        });
    }

    let mut header = TraceHeader::new(cfg.schema()?, cfg.specificity);
    header.location_mode = Some(cfg.location_mode);
    header.registry = Some(cfg.registry.clone());
    header.label_coords = sensors.iter().map(|s| (s.id.clone(), s.at.to_vec())).collect();
    header.source = Some(format!("synthetic seed={seed} days={}", cfg.days));
    Ok(Trace { header, records })
}

/// Number of records per ground-truth device.
pub fn device_counts(trace: &Trace) -> BTreeMap<DeviceId, usize> {
    let mut out = BTreeMap::new();
    for r in &trace.records {
        *out.entry(r.truth.device.clone()).or_insert(0) += 1;
    }
    out
}

/// Distinct activity names in `cfg`.
pub fn activity_names(cfg: &ScenarioConfig) -> BTreeSet<&str> {
    cfg.activities.iter().map(|a| a.name.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig { days: 20, ..ScenarioConfig::default() }
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        assert_eq!(activity_names(&cfg).len(), 26);
        assert_eq!(cfg.sensors().len(), 19);
        assert_eq!(cfg.registry.devices.len(), 10);
    }

    #[test]
    fn deterministic() {
        let a = generate(&small(), 3).unwrap().to_bytes();
        assert_eq!(a, generate(&small(), 3).unwrap().to_bytes());
        assert_ne!(a, generate(&small(), 4).unwrap().to_bytes());
    }

    #[test]
    fn wake_up_follows_every_sleep() {
        let trace = generate(&small(), 1).unwrap();
        let recs = &trace.records;
        let wakes: Vec<_> = recs.iter().filter(|r| r.truth.action.as_str() == "playMusic").collect();
        assert_eq!(wakes.len(), 20);
        for w in &wakes {
            assert_eq!(w.truth.device.as_str(), "bedroom_speaker");
            let slept = recs.iter().any(|r| {
                let gap = (w.t - r.t).num_minutes();
                r.truth.device.as_str() == "bedroom_light" && r.truth.action.as_str() == "turnOff" && (300..=600).contains(&gap)
            });
            assert!(slept, "wake-up at {} without a sleep before it", w.t);
        }
        for w in recs.iter().filter(|r| r.truth.device.as_str() == "doorbell_camera") {
            assert_eq!(w.truth.action.as_str(), "turnOn");
        }
    }

    #[test]
    fn records_are_ordered_and_conform() {
        let trace = generate(&small(), 2).unwrap();
        assert!(trace.records.windows(2).all(|w| w[0].t <= w[1].t));
        for r in &trace.records {
            trace.header.schema.snapshot(r.context.clone(), 0).unwrap();
        }
        trace.check_registry(trace.header.registry.as_ref().unwrap()).unwrap();
        let cat = ScenarioConfig { location_mode: LocationMode::Categorical, ..small() };
        let t = generate(&cat, 2).unwrap();
        assert_eq!(t.records.len(), trace.records.len());
        for r in &t.records {
            t.header.schema.snapshot(r.context.clone(), 0).unwrap();
        }
    }

    #[test]
    fn unmapped_device_is_a_config_error() {
        let mut cfg = small();
        cfg.activities[3].device = Some("attic_light".into());
        assert!(matches!(generate(&cfg, 0), Err(Error::Config(_))));
        let mut cfg = small();
        cfg.activities[3].rooms = vec!["garage".into()];
        assert!(generate(&cfg, 0).is_err());
    }
}
