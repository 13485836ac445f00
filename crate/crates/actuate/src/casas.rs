//! CASAS-style text event logs and the canonical JSON-lines event log.
//!
//! Text lines look like `2011-06-15 03:38:23.271939 M021 ON [annotation...]`,
//! whitespace separated. The canonical form is one `{t, sensor, value}`
//! object per line.

use std::io::{BufRead, Write};

use chrono::NaiveDateTime;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEvent {
    #[serde(with = "crate::timefmt")]
    pub t: NaiveDateTime,
    pub sensor: String,
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
}

/// Parsed events plus the lines that were skipped, as `(line, reason)`.
#[derive(Debug, Clone, Default)]
pub struct ParsedLog {
    pub events: Vec<RawEvent>,
    pub skipped: Vec<(usize, String)>,
}

/// Parses one text line. Blank lines and `#` comments give `Ok(None)`.
pub fn parse_line(line: &str) -> std::result::Result<Option<RawEvent>, String> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let mut tokens = line.split_whitespace();
    let (Some(date), Some(time)) = (tokens.next(), tokens.next()) else {
        return Err("missing date or time".into());
    };
    let t = NaiveDateTime::parse_from_str(&format!("{date} {time}"), "%Y-%m-%d %H:%M:%S%.f")
        .map_err(|e| format!("bad timestamp `{date} {time}`: {e}"))?;
    let sensor = tokens.next().ok_or("missing sensor id")?;
    let value = tokens.next().ok_or("missing value")?;
    let rest: Vec<&str> = tokens.collect();
    Ok(Some(RawEvent {
        t,
        sensor: sensor.to_string(),
        value: value.to_string(),
        annotation: (!rest.is_empty()).then(|| rest.join(" ")),
    }))
}

/// Parses a text log. Malformed lines are logged and skipped, or abort the
/// parse in `strict` mode.
pub fn parse_event_log<R: BufRead>(reader: R, strict: bool) -> Result<ParsedLog> {
    let mut out = ParsedLog::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        match parse_line(&line) {
            Ok(Some(e)) => out.events.push(e),
            Ok(None) => {}
            Err(message) if strict => return Err(Error::Parse { line: i + 1, message }),
            Err(message) => {
                warn!("line {}: {message}; skipped", i + 1);
                out.skipped.push((i + 1, message));
            }
        }
    }
    Ok(out)
}

pub fn write_canonical<W: Write>(mut w: W, events: &[RawEvent]) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e).map_err(Error::json("event"))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_canonical<R: BufRead>(reader: R) -> Result<Vec<RawEvent>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?);
    }
    Ok(out)
}

/// Reads either format, by sniffing the first non-blank character.
pub fn read_any<R: BufRead>(mut reader: R, strict: bool) -> Result<ParsedLog> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    if text.trim_start().starts_with('{') {
        Ok(ParsedLog { events: read_canonical(text.as_bytes())?, skipped: Vec::new() })
    } else {
        parse_event_log(text.as_bytes(), strict)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timefmt;

    #[test]
    fn sample_line() {
        let e = parse_line("2011-06-15 03:38:23.271939 M021 ON").unwrap().unwrap();
        assert_eq!(e.sensor, "M021");
        assert_eq!(e.value, "ON");
        assert_eq!(timefmt::format(&e.t), "2011-06-15T03:38:23.271939");
        assert_eq!(timefmt::second_of_day(&e.t).floor(), 13103.0);
        assert_eq!(e.annotation, None);
    }

    #[test]
    fn annotations_and_whole_seconds() {
        let e = parse_line("2011-06-15\t22:01:00 M004 OFF Sleep begin").unwrap().unwrap();
        assert_eq!(e.annotation.as_deref(), Some("Sleep begin"));
        assert_eq!(timefmt::format(&e.t), "2011-06-15T22:01:00.000000");
    }

    #[test]
    fn malformed_lines() {
        let text = "2011-06-15 03:38:23.271939 M021\nnot a date M1 ON\n\n2011-06-15 03:38:24 M021 OFF\n";
        let log = parse_event_log(text.as_bytes(), false).unwrap();
        assert_eq!(log.events.len(), 1);
        assert_eq!(log.skipped.iter().map(|s| s.0).collect::<Vec<_>>(), vec![1, 2]);
        match parse_event_log(text.as_bytes(), true) {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(parse_event_log("".as_bytes(), true).unwrap().events.is_empty());
    }

    #[test]
    fn canonical_round_trip() {
        let text = "2011-06-15 03:38:23.271939 M021 ON\n2011-06-15 03:38:25 L003 OFF Cook end\n";
        let events = parse_event_log(text.as_bytes(), true).unwrap().events;
        let mut buf = Vec::new();
        write_canonical(&mut buf, &events).unwrap();
        let first = String::from_utf8(buf.clone()).unwrap();
        assert!(first.starts_with(r#"{"t":"2011-06-15T03:38:23.271939","sensor":"M021","value":"ON"}"#));
        assert_eq!(read_canonical(buf.as_slice()).unwrap(), events);
        assert_eq!(read_any(buf.as_slice(), true).unwrap().events, events);
    }
}
