//! Sensor metadata: which ids are motion sensors or devices, where they are
//! and what a device event means.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use actuate_core::{ActionId, ClassDecl, DeviceId, DeviceSpec, Registry};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Motion,
    LightDevice,
    OtherDevice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorInfo {
    pub role: Role,
    /// Location label; the sensor id when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<DeviceId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    /// Value token to action, e.g. `ON -> turnOn`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub actions: BTreeMap<String, ActionId>,
}

fn default_unknown() -> String {
    "unknown".into()
}

fn default_on() -> BTreeSet<String> {
    ["ON".to_string()].into()
}

fn default_off() -> BTreeSet<String> {
    ["OFF".to_string()].into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorMap {
    pub sensors: BTreeMap<String, SensorInfo>,
    /// Location label used before any motion has been seen.
    #[serde(default = "default_unknown")]
    pub unknown_label: String,
    /// Motion tokens meaning "activated".
    #[serde(default = "default_on")]
    pub motion_on: BTreeSet<String>,
    #[serde(default = "default_off")]
    pub motion_off: BTreeSet<String>,
    /// `[[x_min, x_max], [y_min, y_max]]`; derived from the coordinates when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<[[f64; 2]; 2]>,
}

impl SensorMap {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let map: SensorMap = serde_json::from_str(&text).map_err(Error::json(path.display().to_string()))?;
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        for (id, s) in &self.sensors {
            if s.role != Role::Motion && s.device.is_none() {
                return Err(Error::Config(format!("device sensor `{id}` has no device id")));
            }
        }
        Ok(())
    }

    pub fn get(&self, sensor: &str) -> Option<&SensorInfo> {
        self.sensors.get(sensor)
    }

    pub fn label(&self, sensor: &str) -> String {
        self.sensors.get(sensor).and_then(|s| s.location.clone()).unwrap_or_else(|| sensor.to_string())
    }

    /// Every motion-sensor location label plus the unknown label, sorted.
    pub fn location_labels(&self) -> Vec<String> {
        let mut labels: BTreeSet<String> = self
            .sensors
            .iter()
            .filter(|(_, s)| s.role == Role::Motion)
            .map(|(id, _)| self.label(id))
            .collect();
        labels.insert(self.unknown_label.clone());
        labels.into_iter().collect()
    }

    /// Fails unless every motion sensor has coordinates.
    pub fn require_coordinates(&self) -> Result<()> {
        match self.sensors.iter().find(|(_, s)| s.role == Role::Motion && s.coords.is_none()) {
            Some((id, _)) => Err(Error::Config(format!("coordinate mode needs coordinates for motion sensor `{id}`"))),
            None => Ok(()),
        }
    }

    pub fn coordinate_extent(&self) -> [[f64; 2]; 2] {
        if let Some(e) = self.extent {
            return e;
        }
        let mut e = [[f64::INFINITY, f64::NEG_INFINITY]; 2];
        for c in self.sensors.values().filter_map(|s| s.coords) {
            for d in 0..2 {
                e[d][0] = e[d][0].min(c[d]);
                e[d][1] = e[d][1].max(c[d]);
            }
        }
        for r in &mut e {
            if !r[0].is_finite() {
                *r = [0.0, 1.0];
            } else if r[1] <= r[0] {
                r[1] = r[0] + 1.0;
            }
        }
        e
    }

    /// Action for a device event, if the token maps to one.
    pub fn device_action(&self, sensor: &SensorInfo, value: &str) -> Option<ActionId> {
        if let Some(a) = sensor.actions.get(value) {
            return Some(a.clone());
        }
        match value {
            "ON" => Some("turnOn".into()),
            "OFF" => Some("turnOff".into()),
            _ => None,
        }
    }

    /// Declared class, or `light` / `device` by role.
    pub fn class_of(sensor: &SensorInfo) -> String {
        sensor.class.clone().unwrap_or_else(|| match sensor.role {
            Role::LightDevice => "light".into(),
            _ => "device".into(),
        })
    }

    /// A registry with one locally backed device per mapped device id.
    pub fn registry(&self) -> Registry {
        let mut devices: BTreeMap<DeviceId, DeviceSpec> = BTreeMap::new();
        let mut classes = BTreeSet::new();
        for s in self.sensors.values().filter(|s| s.role != Role::Motion) {
            let Some(id) = &s.device else { continue };
            let class = Self::class_of(s);
            classes.insert(class.clone());
            let entry = devices.entry(id.clone()).or_insert_with(|| DeviceSpec {
                id: id.clone(),
                classes: vec![class.as_str().into()],
                actions: Vec::new(),
                backing: Default::default(),
                location: s.coords.map(|c| c.to_vec()),
                weights: None,
            });
            let mut actions: BTreeSet<ActionId> = entry.actions.iter().cloned().collect();
            actions.extend(["turnOn".into(), "turnOff".into()]);
            actions.extend(s.actions.values().cloned());
            entry.actions = actions.into_iter().collect();
        }
        Registry {
            classes: classes.into_iter().map(|c| ClassDecl { id: c.as_str().into(), parent: None }).collect(),
            devices: devices.into_values().collect(),
        }
    }
}
