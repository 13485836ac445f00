//! Request traces: a header line followed by one record per line.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use actuate_core::{ActionId, ContextSchema, ContextSnapshot, ContextValue, DeviceId, Registry, Request};
use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::contexts::{LocationMode, Specificity};
use crate::{timefmt, Error, Result};

pub const FORMAT: &str = "actuate-trace/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truth {
    pub device: DeviceId,
    pub action: ActionId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    #[serde(with = "crate::timefmt")]
    pub t: NaiveDateTime,
    /// Values in schema order.
    pub context: Vec<ContextValue>,
    pub request: TraceRequest,
    pub truth: Truth,
}

/// Request as stored in a trace; the timestamp lives on the record.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRequest {
    #[serde(default)]
    pub class: Option<String>,
    #[serde(default)]
    pub action: Option<String>,
}

impl From<Request> for TraceRequest {
    fn from(r: Request) -> Self {
        Self { class: r.class.map(|c| c.0), action: r.action.map(|a| a.0) }
    }
}

impl TraceRecord {
    pub fn micros(&self) -> i64 {
        timefmt::micros(&self.t)
    }

    pub fn snapshot(&self) -> ContextSnapshot {
        ContextSnapshot::new(self.context.clone(), self.micros())
    }

    pub fn core_request(&self) -> Request {
        let mut r = Request::new(self.request.class.as_deref(), self.request.action.as_deref());
        r.timestamp = self.micros();
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub schema: ContextSchema,
    pub specificity: Specificity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location_mode: Option<LocationMode>,
    /// Devices the trace was generated for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<Registry>,
    /// Coordinates of categorical location labels, when known.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub label_coords: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl TraceHeader {
    pub fn new(schema: ContextSchema, specificity: Specificity) -> Self {
        Self {
            format: FORMAT.into(),
            schema,
            specificity,
            location_mode: None,
            registry: None,
            label_coords: BTreeMap::new(),
            source: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.header).map_err(Error::json("trace header"))?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r).map_err(Error::json("trace record"))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut header: Option<TraceHeader> = None;
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |e: serde_json::Error| Error::Parse { line: i + 1, message: e.to_string() };
            match &header {
                None => {
                    let h: TraceHeader = serde_json::from_str(&line).map_err(parse_err)?;
                    if h.format != FORMAT {
                        return Err(Error::Parse { line: i + 1, message: format!("unsupported format `{}`", h.format) });
                    }
                    header = Some(h);
                }
                Some(h) => {
                    let r: TraceRecord = serde_json::from_str(&line).map_err(parse_err)?;
                    h.schema
                        .snapshot(r.context.clone(), 0)
                        .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
                    if records.last().is_some_and(|p: &TraceRecord| p.t > r.t) {
                        return Err(Error::Parse { line: i + 1, message: "timestamps go backwards".into() });
                    }
                    records.push(r);
                }
            }
        }
        let header = header.ok_or(Error::Parse { line: 1, message: "missing trace header".into() })?;
        Ok(Self { header, records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(Error::io(path))?;
        Self::read(std::io::BufReader::new(f))
    }

    /// Devices named in the header registry, or else in the records.
    pub fn devices(&self) -> BTreeSet<DeviceId> {
        match &self.header.registry {
            Some(r) => r.devices.iter().map(|d| d.id.clone()).collect(),
            None => self.records.iter().map(|r| r.truth.device.clone()).collect(),
        }
    }

    /// Fails if a ground-truth device or action is unknown to `registry`.
    pub fn check_registry(&self, registry: &Registry) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            let spec = registry.device(&r.truth.device).ok_or_else(|| {
                Error::Config(format!("record {i}: device `{}` is not in the registry", r.truth.device))
            })?;
            if !spec.actions.contains(&r.truth.action) {
                return Err(Error::Config(format!(
                    "record {i}: device `{}` has no action `{}`",
                    r.truth.device, r.truth.action
                )));
            }
        }
        Ok(())
    }
}

/// Exchanges the ground-truth devices `a` and `b` in every record from
/// index `at` on.
pub fn inject_swap(trace: &mut Trace, a: &DeviceId, b: &DeviceId, at: usize) -> Result<()> {
    let known = trace.devices();
    for d in [a, b] {
        if !known.contains(d) {
            return Err(Error::Config(format!("cannot swap unknown device `{d}`")));
        }
    }
    if at > trace.records.len() {
        return Err(Error::Config(format!("swap index {at} is past the end ({})", trace.records.len())));
    }
    for r in &mut trace.records[at..] {
        if &r.truth.device == a {
            r.truth.device = b.clone();
        } else if &r.truth.device == b {
            r.truth.device = a.clone();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use actuate_core::AttributeDescriptor;

    fn trace(n: usize) -> Trace {
        let schema = ContextSchema::new(vec![
            AttributeDescriptor::categorical("user", ["r"]),
            AttributeDescriptor::cyclic("second_of_day", 86400.0),
        ])
        .unwrap();
        let base = timefmt::parse("2011-06-15T00:00:00").unwrap();
        let records = (0..n)
            .map(|i| TraceRecord {
                t: base + chrono::Duration::seconds(i as i64),
                context: vec![ContextValue::label("r"), ContextValue::Scalar(i as f64)],
                request: TraceRequest::default(),
                truth: Truth {
                    device: ["dining", "doorway", "kitchen"][i % 3].into(),
                    action: "turnOn".into(),
                },
            })
            .collect();
        Trace { header: TraceHeader::new(schema, Specificity::None), records }
    }

    #[test]
    fn round_trip() {
        let t = trace(5);
        let bytes = t.to_bytes();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.lines().next().unwrap().starts_with(r#"{"format":"actuate-trace/1""#));
        assert!(text.lines().nth(1).unwrap().starts_with(r#"{"t":"2011-06-15T00:00:00.000000""#));
        assert_eq!(Trace::read(bytes.as_slice()).unwrap(), t);
    }

    #[test]
    fn rejects_bad_records() {
        let t = trace(2);
        let mut text = String::from_utf8(t.to_bytes()).unwrap();
        text.push_str(r#"{"t":"2011-06-15T00:00:00","context":["r",1.0],"request":{},"truth":{"device":"x","action":"a"}}"#);
        assert!(matches!(Trace::read(text.as_bytes()), Err(Error::Parse { line: 4, .. })));
        let bad = text.replace(r#"["r",1.0]"#, r#"["q",1.0]"#);
        assert!(Trace::read(bad.as_bytes()).is_err());
        assert!(Trace::read("".as_bytes()).is_err());
    }

    #[test]
    fn swap_examples() {
        let orig = trace(400);
        let mut t = orig.clone();
        inject_swap(&mut t, &"dining".into(), &"doorway".into(), 200).unwrap();
        assert_eq!(t.records[..200], orig.records[..200]);
        // 250 % 3 == 1: doorway before, dining after
        assert_eq!(orig.records[250].truth.device.as_str(), "doorway");
        assert_eq!(t.records[250].truth.device.as_str(), "dining");
        assert_eq!(t.records[251].truth.device.as_str(), "kitchen");
        inject_swap(&mut t, &"dining".into(), &"doorway".into(), 200).unwrap();
        assert_eq!(t, orig);

        let mut same = orig.clone();
        inject_swap(&mut same, &"dining".into(), &"doorway".into(), 400).unwrap();
        assert_eq!(same, orig);
        assert!(inject_swap(&mut same, &"dining".into(), &"attic".into(), 0).is_err());
        assert!(inject_swap(&mut same, &"dining".into(), &"doorway".into(), 401).is_err());
    }
}
