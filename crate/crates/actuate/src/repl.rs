//! Line-oriented interactive session over a decider.

use std::io::{BufRead, Write};

use actuate_core::{
    AttributeKind, ClassId, ContextSchema, ContextSnapshot, ContextValue, Decider, EpisodeStatus, Error as CoreError,
    Request,
};
use chrono::NaiveDateTime;

use crate::contexts::ContextStream;
use crate::trace::{TraceRecord, Truth};
use crate::{timefmt, Result};

const HELP: &str = "\
commands:
  act [class [action]]   ask for a device
  y | n                  accept or reject the current proposal
  set <attr> <value>     set a context value (vectors as x,y)
  time <iso-time>        move the clock (and the loaded context stream)
  show                   print the current context
  states                 print state counts per device
  help | quit";

pub struct Session {
    pub decider: Decider,
    pub schema: ContextSchema,
    pub values: Vec<ContextValue>,
    pub time: NaiveDateTime,
    pub stream: Option<ContextStream>,
    /// Accepted requests, as trace records.
    pub transcript: Vec<TraceRecord>,
}

fn initial_value(kind: &AttributeKind) -> ContextValue {
    match kind {
        AttributeKind::Numeric { min, .. } => ContextValue::Scalar(*min),
        AttributeKind::Cyclic { .. } => ContextValue::Scalar(0.0),
        AttributeKind::Vector { ranges, .. } => ContextValue::Vector(ranges.iter().map(|r| r[0]).collect()),
        AttributeKind::Categorical { labels } => ContextValue::label(labels.first().cloned().unwrap_or_default()),
    }
}

impl Session {
    pub fn new(decider: Decider, schema: ContextSchema, time: NaiveDateTime) -> Self {
        let values = schema.attributes().iter().map(|a| initial_value(&a.kind)).collect();
        let mut s = Self { decider, schema, values, time, stream: None, transcript: Vec::new() };
        s.sync_time();
        s
    }

    pub fn with_stream(mut self, stream: ContextStream) -> Self {
        self.stream = Some(stream);
        self.sync_time();
        self
    }

    fn sync_time(&mut self) {
        let t = timefmt::micros(&self.time);
        if let Some(s) = &self.stream {
            let v = s.values_at(t);
            if v.len() == self.values.len() {
                self.values = v;
                return;
            }
        }
        if let Some(i) = self.schema.index_of("second_of_day") {
            self.values[i] = ContextValue::Scalar(timefmt::second_of_day(&self.time));
        }
    }

    fn snapshot(&self) -> ContextSnapshot {
        ContextSnapshot::new(self.values.clone(), timefmt::micros(&self.time))
    }

    fn parse_value(&self, index: usize, text: &str) -> std::result::Result<ContextValue, String> {
        let attr = &self.schema.attributes()[index];
        let value = match &attr.kind {
            AttributeKind::Numeric { .. } | AttributeKind::Cyclic { .. } => {
                ContextValue::Scalar(text.parse().map_err(|_| format!("`{text}` is not a number"))?)
            }
            AttributeKind::Vector { .. } => ContextValue::Vector(
                text.split(',')
                    .map(|x| x.trim().parse::<f64>().map_err(|_| format!("`{x}` is not a number")))
                    .collect::<std::result::Result<_, _>>()?,
            ),
            AttributeKind::Categorical { .. } => ContextValue::label(text),
        };
        attr.conform(value).map_err(|e| e.to_string())
    }

    fn check_request(&self, class: Option<&str>, action: Option<&str>) -> std::result::Result<(), String> {
        if let Some(c) = class {
            if !self.decider.hierarchy().contains(&ClassId::from(c)) {
                return Err(format!("unknown class `{c}`"));
            }
        }
        if let Some(a) = action {
            if !self.decider.registry().devices.iter().any(|d| d.actions.iter().any(|x| x.as_str() == a)) {
                return Err(format!("unknown action `{a}`"));
            }
        }
        Ok(())
    }

    fn show_proposal(&self, out: &mut impl Write, p: &actuate_core::Proposal) -> std::io::Result<()> {
        if p.is_compatible() {
            let action = p.action.as_ref().map(|a| a.as_str()).unwrap_or("-");
            writeln!(out, "proposal: {} {} (u={:.3})", p.device, action, p.utility)?;
            write!(out, "accept? [y/n] ")
        } else {
            writeln!(out, "no compatible device")
        }
    }

    /// Handles one input line. Returns false on `quit`.
    pub fn handle(&mut self, line: &str, out: &mut impl Write) -> Result<bool> {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            [] => {}
            ["quit" | "exit"] => return Ok(false),
            ["help"] => writeln!(out, "{HELP}")?,
            ["act", rest @ ..] if rest.len() <= 2 => {
                let (class, action) = (rest.first().copied(), rest.get(1).copied());
                if let Err(m) = self.check_request(class, action) {
                    writeln!(out, "{m}\nusage: act [class [action]]")?;
                    return Ok(true);
                }
                self.decider.abandon();
                let mut request = Request::new(class, action);
                request.timestamp = timefmt::micros(&self.time);
                match self.decider.resolve(&request, &self.snapshot()) {
                    Ok(p) => {
                        self.show_proposal(out, &p)?;
                        if !p.is_compatible() {
                            self.decider.abandon();
                        }
                    }
                    Err(CoreError::Exhausted) => writeln!(out, "no compatible device")?,
                    Err(e) => return Err(e.into()),
                }
            }
            ["y"] => match self.decider.accept() {
                Ok(p) => {
                    let episode = self.decider.episode().expect("accepted episode");
                    if let Some(action) = p.action.clone() {
                        self.transcript.push(TraceRecord {
                            t: self.time,
                            context: self.values.clone(),
                            request: episode.request.clone().into(),
                            truth: Truth { device: p.device.clone(), action },
                        });
                    }
                    writeln!(out, "accepted {}", p.device)?;
                }
                Err(CoreError::EpisodeState(_)) => writeln!(out, "nothing to accept")?,
                Err(e) => return Err(e.into()),
            },
            ["n"] => match self.decider.reject() {
                Ok(p) => self.show_proposal(out, &p)?,
                Err(CoreError::Exhausted) => writeln!(out, "no remaining proposals")?,
                Err(CoreError::EpisodeState(_)) => writeln!(out, "nothing to reject")?,
                Err(e) => return Err(e.into()),
            },
            ["set", name, value] => match self.schema.index_of(name) {
                None => writeln!(out, "unknown attribute `{name}`")?,
                Some(i) => match self.parse_value(i, value) {
                    Ok(v) => self.values[i] = v,
                    Err(m) => writeln!(out, "{m}")?,
                },
            },
            ["time", t] => match timefmt::parse(t) {
                Ok(t) => {
                    self.time = t;
                    self.sync_time();
                }
                Err(e) => writeln!(out, "bad time `{t}`: {e}")?,
            },
            ["show"] => {
                writeln!(out, "time {}", timefmt::format(&self.time))?;
                for (a, v) in self.schema.attributes().iter().zip(&self.values) {
                    writeln!(out, "  {} = {}", a.name, serde_json::to_string(v).unwrap_or_default())?;
                }
            }
            ["states"] => {
                for m in self.decider.models() {
                    writeln!(out, "  {}: {} states", m.device(), m.states().len())?;
                }
            }
            _ => writeln!(out, "unrecognized input; type `help`")?,
        }
        out.flush()?;
        Ok(true)
    }

    pub fn run<R: BufRead, W: Write>(&mut self, input: R, mut out: W) -> Result<()> {
        write!(out, "> ")?;
        out.flush()?;
        for line in input.lines() {
            if !self.handle(&line?, &mut out)? {
                break;
            }
            if self.decider.episode().is_none_or(|e| e.status != EpisodeStatus::Open) {
                write!(out, "> ")?;
                out.flush()?;
            }
        }
        writeln!(out)?;
        Ok(())
    }
}
