//! ISO-8601 timestamps with exactly six fractional digits.

use chrono::{DateTime, NaiveDateTime, Timelike};
use serde::{Deserialize, Deserializer, Serializer};

pub const FORMAT: &str = "%Y-%m-%dT%H:%M:%S%.6f";

pub fn format(t: &NaiveDateTime) -> String {
    t.format(FORMAT).to_string()
}

pub fn parse(s: &str) -> Result<NaiveDateTime, chrono::ParseError> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
}

/// Microseconds since the Unix epoch, treating `t` as UTC.
pub fn micros(t: &NaiveDateTime) -> i64 {
    t.and_utc().timestamp_micros()
}

pub fn from_micros(us: i64) -> Option<NaiveDateTime> {
    DateTime::from_timestamp_micros(us).map(|d| d.naive_utc())
}

/// Seconds since local midnight, fractional part included.
pub fn second_of_day(t: &NaiveDateTime) -> f64 {
    t.num_seconds_from_midnight() as f64 + t.nanosecond() as f64 / 1e9
}

pub fn serialize<S: Serializer>(t: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(&t.format(FORMAT))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
    let s = String::deserialize(d)?;
    parse(&s).map_err(serde::de::Error::custom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_digit_fraction() {
        let t = parse("2011-06-15T03:38:23.2").unwrap();
        assert_eq!(format(&t), "2011-06-15T03:38:23.200000");
        assert_eq!(second_of_day(&t), 13103.2);
        assert_eq!(from_micros(micros(&t)), Some(t));
    }
}
