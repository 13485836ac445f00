//! Trace replay against a simulated user who knows the ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use actuate_core::{
    ClassHierarchy, ClassId, ContextSnapshot, ContextValue, Decider, DeviceId, Proposal, Registry, Request,
};
use serde::{Deserialize, Serialize};

use crate::metrics::Outcome;
use crate::trace::{Trace, Truth};
use crate::Result;

/// Anything that answers requests through propose / reject / accept.
pub trait Resolver {
    fn resolve(&mut self, request: &Request, context: &ContextSnapshot) -> actuate_core::Result<Proposal>;
    fn reject(&mut self) -> actuate_core::Result<Proposal>;
    fn accept(&mut self) -> actuate_core::Result<()>;
    fn abandon(&mut self);
}

impl Resolver for Decider {
    fn resolve(&mut self, request: &Request, context: &ContextSnapshot) -> actuate_core::Result<Proposal> {
        Decider::resolve(self, request, context)
    }

    fn reject(&mut self) -> actuate_core::Result<Proposal> {
        Decider::reject(self)
    }

    fn accept(&mut self) -> actuate_core::Result<()> {
        Decider::accept(self).map(drop)
    }

    fn abandon(&mut self) {
        Decider::abandon(self)
    }
}

/// Proposes compatible devices in order of distance from the user, nearest
/// first. Learns nothing. Proposals carry the requested action, or none.
#[derive(Debug, Clone)]
pub struct NearestDevice {
    devices: Vec<(DeviceId, BTreeSet<ClassId>, Vec<actuate_core::ActionId>, Option<Vec<f64>>)>,
    location_index: usize,
    label_coords: BTreeMap<String, Vec<f64>>,
    queue: Vec<Proposal>,
    open: bool,
}

impl NearestDevice {
    pub fn new(registry: &Registry, location_index: usize, label_coords: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let hierarchy: ClassHierarchy = registry.hierarchy()?;
        let devices = registry
            .devices
            .iter()
            .map(|d| (d.id.clone(), hierarchy.closure(&d.classes), d.actions.clone(), d.location.clone()))
            .collect();
        Ok(Self { devices, location_index, label_coords, queue: Vec::new(), open: false })
    }

    fn position<'a>(&'a self, context: &'a ContextSnapshot) -> Option<&'a [f64]> {
        match context.values.get(self.location_index)? {
            ContextValue::Vector(v) => Some(v),
            ContextValue::Label(l) => self.label_coords.get(l).map(|v| v.as_slice()),
            ContextValue::Scalar(_) => None,
        }
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl Resolver for NearestDevice {
    fn resolve(&mut self, request: &Request, context: &ContextSnapshot) -> actuate_core::Result<Proposal> {
        if self.open {
            return Err(actuate_core::Error::EpisodeState("an episode is already open"));
        }
        let here = self.position(context);
        let mut ranked: Vec<(f64, &DeviceId)> = self
            .devices
            .iter()
            .filter(|(_, classes, actions, _)| {
                request.class.as_ref().is_none_or(|c| classes.contains(c))
                    && request.action.as_ref().is_none_or(|a| actions.contains(a))
            })
            .map(|(id, _, _, at)| {
                let d = match (here, at) {
                    (Some(h), Some(p)) if h.len() == p.len() => euclid(h, p),
                    _ => f64::INFINITY,
                };
                (d, id)
            })
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        self.queue = ranked.into_iter().rev().map(|(_, id)| Proposal::new(id.clone(), request.action.clone(), 1.0)).collect();
        self.open = true;
        self.queue.last().cloned().ok_or(actuate_core::Error::Exhausted).inspect_err(|_| self.open = false)
    }

    fn reject(&mut self) -> actuate_core::Result<Proposal> {
        if !self.open {
            return Err(actuate_core::Error::EpisodeState("no open episode"));
        }
        self.queue.pop();
        match self.queue.last() {
            Some(p) => Ok(p.clone()),
            None => {
                self.open = false;
                Err(actuate_core::Error::Exhausted)
            }
        }
    }

    fn accept(&mut self) -> actuate_core::Result<()> {
        if !self.open {
            return Err(actuate_core::Error::EpisodeState("no open episode"));
        }
        self.open = false;
        Ok(())
    }

    fn abandon(&mut self) {
        self.open = false;
        self.queue.clear();
    }
}

/// The simulated user's test: the device must match, and the action too
/// when the request left it open. A proposal without an action passes the
/// action test.
pub fn satisfies(proposal: &Proposal, request: &Request, truth: &Truth) -> bool {
    proposal.device == truth.device
        && (request.action.is_some() || proposal.action.as_ref().is_none_or(|a| *a == truth.action))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReplayOptions {
    /// Proposals shown per request before giving up; unlimited when absent.
    pub max_proposals: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub index: usize,
    /// Microseconds since the epoch.
    pub timestamp: i64,
    pub proposals: Vec<Proposal>,
    pub negatives: usize,
    pub satisfied: bool,
    /// Wall time of the first resolve.
    pub latency_us: u64,
    /// Wall time of the closing accept.
    pub feedback_latency_us: u64,
}

impl EpisodeRecord {
    pub fn first_correct(&self) -> bool {
        self.satisfied && self.negatives == 0
    }

    pub fn within_two(&self) -> bool {
        self.satisfied && self.proposals.len() <= 2
    }

    pub fn outcome(&self) -> Outcome {
        Outcome { first_correct: self.first_correct(), negatives: self.negatives, proposals: self.proposals.len() }
    }
}

fn micros_since(t: Instant) -> u64 {
    t.elapsed().as_micros().try_into().unwrap_or(u64::MAX)
}

/// Replays every record of `trace` in order. Exhaustion is an unsatisfied
/// episode; any other resolver error aborts the replay.
pub fn replay<R: Resolver + ?Sized>(trace: &Trace, resolver: &mut R, options: ReplayOptions) -> Result<Vec<EpisodeRecord>> {
    let cap = options.max_proposals.unwrap_or(usize::MAX).max(1);
    let mut out = Vec::with_capacity(trace.records.len());
    for (index, record) in trace.records.iter().enumerate() {
        let request = record.core_request();
        let context = record.snapshot();
        let mut episode = EpisodeRecord {
            index,
            timestamp: context.timestamp,
            proposals: Vec::new(),
            negatives: 0,
            satisfied: false,
            latency_us: 0,
            feedback_latency_us: 0,
        };
        let started = Instant::now();
        let first = resolver.resolve(&request, &context);
        episode.latency_us = micros_since(started);
        let mut current = match first {
            Ok(p) => Some(p),
            Err(actuate_core::Error::Exhausted) => None,
            Err(e) => return Err(e.into()),
        };
        while let Some(p) = current.take() {
            episode.proposals.push(p.clone());
            if satisfies(&p, &request, &record.truth) {
                let started = Instant::now();
                resolver.accept()?;
                episode.feedback_latency_us = micros_since(started);
                episode.satisfied = true;
                break;
            }
            episode.negatives += 1;
            match resolver.reject() {
                Ok(next) if episode.proposals.len() < cap => current = Some(next),
                Ok(_) => resolver.abandon(),
                Err(actuate_core::Error::Exhausted) => {}
                Err(e) => return Err(e.into()),
            }
        }
        out.push(episode);
    }
    Ok(out)
}
