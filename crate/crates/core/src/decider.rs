//! Arbitration between device models and external controllers.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use crate::context::{ContextSchema, ContextSnapshot, WeightVector};
use crate::error::{Error, Result};
use crate::ids::{ActionId, ClassId, DeviceId};
use crate::model::{Bid, DeviceLocalModel, Feedback, FeedbackKind, Hyperparameters, Proposal, Request};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDecl {
    pub id: ClassId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<ClassId>,
}

/// Device classes linked to their parents. Membership in a class implies
/// membership in all of its ancestors.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassHierarchy {
    parents: BTreeMap<ClassId, Option<ClassId>>,
}

impl ClassHierarchy {
    pub fn new(decls: &[ClassDecl]) -> Result<Self> {
        let mut parents = BTreeMap::new();
        for d in decls {
            if parents.insert(d.id.clone(), d.parent.clone()).is_some() {
                return Err(Error::Registry(format!("class `{}` declared twice", d.id)));
            }
        }
        let h = Self { parents };
        for (id, parent) in &h.parents {
            if let Some(p) = parent {
                if !h.parents.contains_key(p) {
                    return Err(Error::Registry(format!("class `{id}` has unknown parent `{p}`")));
                }
            }
            // a walk longer than the class count means a cycle
            let mut cur = parent.as_ref();
            let mut steps = 0;
            while let Some(c) = cur {
                steps += 1;
                if steps > h.parents.len() {
                    return Err(Error::Registry(format!("class hierarchy has a cycle through `{id}`")));
                }
                cur = h.parents.get(c).and_then(|p| p.as_ref());
            }
        }
        Ok(h)
    }

    pub fn contains(&self, class: &ClassId) -> bool {
        self.parents.contains_key(class)
    }

    /// `class` followed by its ancestors, nearest first.
    pub fn ancestors(&self, class: &ClassId) -> Vec<ClassId> {
        let mut out = Vec::new();
        let mut cur = Some(class);
        while let Some(c) = cur {
            if out.contains(c) {
                break;
            }
            out.push(c.clone());
            cur = self.parents.get(c).and_then(|p| p.as_ref());
        }
        out
    }

    /// Every class a member of `classes` belongs to.
    pub fn closure<'a>(&self, classes: impl IntoIterator<Item = &'a ClassId>) -> BTreeSet<ClassId> {
        classes.into_iter().flat_map(|c| self.ancestors(c)).collect()
    }
}

/// Which model answers for a device.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backing {
    #[default]
    Local,
    /// Named external controller.
    External(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub id: DeviceId,
    #[serde(default)]
    pub classes: Vec<ClassId>,
    pub actions: Vec<ActionId>,
    #[serde(default)]
    pub backing: Backing,
    /// Physical position, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<Vec<f64>>,
    /// Per-attribute context weights; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl DeviceSpec {
    pub fn local(
        id: impl Into<DeviceId>,
        classes: impl IntoIterator<Item = &'static str>,
        actions: impl IntoIterator<Item = &'static str>,
    ) -> Self {
        Self {
            id: id.into(),
            classes: classes.into_iter().map(ClassId::from).collect(),
            actions: actions.into_iter().map(ActionId::from).collect(),
            backing: Backing::Local,
            location: None,
            weights: None,
        }
    }
}

/// The set of known devices and their classes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    #[serde(default)]
    pub classes: Vec<ClassDecl>,
    pub devices: Vec<DeviceSpec>,
}

impl Registry {
    /// Checks unique device ids, resolvable classes and an acyclic hierarchy.
    pub fn hierarchy(&self) -> Result<ClassHierarchy> {
        let h = ClassHierarchy::new(&self.classes)?;
        let mut ids = BTreeSet::new();
        for d in &self.devices {
            if !ids.insert(&d.id) {
                return Err(Error::Registry(format!("device `{}` declared twice", d.id)));
            }
            if d.actions.is_empty() {
                return Err(Error::Registry(format!("device `{}` has no actions", d.id)));
            }
            if let Some(c) = d.classes.iter().find(|c| !h.contains(c)) {
                return Err(Error::Registry(format!("device `{}` uses unknown class `{c}`", d.id)));
            }
        }
        Ok(h)
    }

    pub fn device(&self, id: &DeviceId) -> Option<&DeviceSpec> {
        self.devices.iter().find(|d| &d.id == id)
    }

    pub fn controller_names(&self) -> BTreeSet<&str> {
        self.devices
            .iter()
            .filter_map(|d| match &d.backing {
                Backing::External(name) => Some(name.as_str()),
                Backing::Local => None,
            })
            .collect()
    }
}

/// A model answering for several devices at once, outside the learned
/// local models.
pub trait ExternalController: Send {
    fn name(&self) -> &str;

    /// One proposal among `candidates`, the compatible and not yet rejected
    /// `(device, action)` pairs of the devices this controller owns. `None`
    /// declines to propose.
    fn propose(
        &mut self,
        request: &Request,
        context: &ContextSnapshot,
        candidates: &[(DeviceId, ActionId)],
    ) -> Result<Option<Proposal>>;

    fn feedback(&mut self, proposal: &Proposal, context: &ContextSnapshot, feedback: Feedback) -> Result<()>;
}

/// A controller with a fixed utility per `(device, action)`; pairs without
/// an entry get `default`.
#[derive(Debug, Clone)]
pub struct StaticController {
    name: String,
    utilities: BTreeMap<(DeviceId, ActionId), f64>,
    default: f64,
    pub feedback_log: Vec<(Proposal, Feedback)>,
}

impl StaticController {
    pub fn new(name: impl Into<String>, default: f64) -> Self {
        Self { name: name.into(), utilities: BTreeMap::new(), default, feedback_log: Vec::new() }
    }

    pub fn with(mut self, device: &str, action: &str, utility: f64) -> Self {
        self.utilities.insert((device.into(), action.into()), utility);
        self
    }
}

impl ExternalController for StaticController {
    fn name(&self) -> &str {
        &self.name
    }

    fn propose(
        &mut self,
        _request: &Request,
        _context: &ContextSnapshot,
        candidates: &[(DeviceId, ActionId)],
    ) -> Result<Option<Proposal>> {
        let mut best: Option<Proposal> = None;
        for (d, a) in candidates {
            let u = self.utilities.get(&(d.clone(), a.clone())).copied().unwrap_or(self.default);
            if best.as_ref().is_none_or(|b| u > b.utility) {
                best = Some(Proposal::new(d.clone(), Some(a.clone()), u));
            }
        }
        Ok(best)
    }

    fn feedback(&mut self, proposal: &Proposal, _context: &ContextSnapshot, feedback: Feedback) -> Result<()> {
        self.feedback_log.push((proposal.clone(), feedback));
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpisodeStatus {
    Open,
    Accepted,
    Exhausted,
}

/// One request from first proposal to acceptance or exhaustion.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionEpisode {
    pub request: Request,
    pub context: ContextSnapshot,
    /// Issued proposals in order; the last one is current.
    pub proposals: Vec<Proposal>,
    pub rejected: BTreeSet<(DeviceId, Option<ActionId>)>,
    pub status: EpisodeStatus,
    first_round_positive: bool,
    last_round: Vec<Bid>,
}

impl DecisionEpisode {
    pub fn current(&self) -> Option<&Proposal> {
        self.proposals.last()
    }

    /// Proposals the user turned down, equal to `proposals.len() - 1` once
    /// accepted.
    pub fn rejections(&self) -> usize {
        self.rejected.len()
    }
}

/// Chooses among the proposals of all registered devices and routes
/// feedback back to the models that made them.
pub struct Decider {
    registry: Registry,
    hierarchy: ClassHierarchy,
    /// Class closure per device.
    classes: BTreeMap<DeviceId, BTreeSet<ClassId>>,
    models: BTreeMap<DeviceId, DeviceLocalModel>,
    controllers: BTreeMap<String, Box<dyn ExternalController>>,
    episode: Option<DecisionEpisode>,
}

impl core::fmt::Debug for Decider {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Decider")
            .field("registry", &self.registry)
            .field("models", &self.models.len())
            .field("controllers", &self.controllers.keys().collect::<Vec<_>>())
            .field("episode", &self.episode)
            .finish()
    }
}

impl Decider {
    /// Builds fresh local models for every locally backed device.
    pub fn new(registry: Registry, schema: &ContextSchema, hyper: &Hyperparameters) -> Result<Self> {
        let hierarchy = registry.hierarchy()?;
        let mut models = Vec::new();
        for d in registry.devices.iter().filter(|d| d.backing == Backing::Local) {
            let mut model = DeviceLocalModel::new(d.id.clone(), d.actions.iter().cloned(), schema.clone(), hyper.clone())?
                .with_classes(hierarchy.closure(&d.classes));
            if let Some(w) = &d.weights {
                model = model.with_weights(WeightVector::new(w.clone())?)?;
            }
            models.push(model);
        }
        Self::assemble(registry, hierarchy, models)
    }

    /// Uses previously trained models, one per locally backed device.
    pub fn with_models(registry: Registry, models: Vec<DeviceLocalModel>) -> Result<Self> {
        let hierarchy = registry.hierarchy()?;
        Self::assemble(registry, hierarchy, models)
    }

    fn assemble(registry: Registry, hierarchy: ClassHierarchy, models: Vec<DeviceLocalModel>) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        for m in models {
            m.validate()?;
            let spec = registry
                .device(m.device())
                .ok_or_else(|| Error::Registry(format!("model for unregistered device `{}`", m.device())))?;
            if spec.backing != Backing::Local {
                return Err(Error::Registry(format!("device `{}` is not locally backed", spec.id)));
            }
            by_id.insert(m.device().clone(), m);
        }
        if let Some(d) = registry.devices.iter().find(|d| d.backing == Backing::Local && !by_id.contains_key(&d.id)) {
            return Err(Error::Registry(format!("no model for device `{}`", d.id)));
        }
        let classes = registry.devices.iter().map(|d| (d.id.clone(), hierarchy.closure(&d.classes))).collect();
        Ok(Self { registry, hierarchy, classes, models: by_id, controllers: BTreeMap::new(), episode: None })
    }

    pub fn attach_controller(&mut self, controller: Box<dyn ExternalController>) -> Result<()> {
        let name = controller.name().to_string();
        if !self.registry.controller_names().contains(name.as_str()) {
            return Err(Error::Registry(format!("no device is backed by controller `{name}`")));
        }
        self.controllers.insert(name, controller);
        Ok(())
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn hierarchy(&self) -> &ClassHierarchy {
        &self.hierarchy
    }

    pub fn models(&self) -> impl Iterator<Item = &DeviceLocalModel> {
        self.models.values()
    }

    pub fn model(&self, device: &DeviceId) -> Option<&DeviceLocalModel> {
        self.models.get(device)
    }

    pub fn into_models(self) -> Vec<DeviceLocalModel> {
        self.models.into_values().collect()
    }

    pub fn episode(&self) -> Option<&DecisionEpisode> {
        self.episode.as_ref()
    }

    fn compatible(&self, spec: &DeviceSpec, request: &Request) -> bool {
        request.class.as_ref().is_none_or(|c| self.classes.get(&spec.id).is_some_and(|cs| cs.contains(c)))
            && request.action.as_ref().is_none_or(|a| spec.actions.contains(a))
    }

    /// Opens an episode for `request` and returns its first proposal.
    pub fn resolve(&mut self, request: &Request, context: &ContextSnapshot) -> Result<Proposal> {
        if self.episode.as_ref().is_some_and(|e| e.status == EpisodeStatus::Open) {
            return Err(Error::EpisodeState("an episode is already open"));
        }
        if self.registry.devices.is_empty() {
            return Err(Error::EmptyRegistry);
        }
        let mut episode = DecisionEpisode {
            request: request.clone(),
            context: context.clone(),
            proposals: Vec::new(),
            rejected: BTreeSet::new(),
            status: EpisodeStatus::Open,
            first_round_positive: false,
            last_round: Vec::new(),
        };
        let bids = self.gather(&episode)?;
        episode.first_round_positive = bids.iter().any(|b| b.proposal.is_compatible());
        let winner = select(&bids, &episode);
        episode.last_round = bids;
        match winner {
            Some(p) => {
                episode.proposals.push(p.clone());
                self.episode = Some(episode);
                Ok(p)
            }
            None => {
                episode.status = EpisodeStatus::Exhausted;
                self.episode = Some(episode);
                Err(Error::Exhausted)
            }
        }
    }

    /// Records the current proposal as rejected and proposes the next best
    /// one, or marks the episode exhausted.
    pub fn reject(&mut self) -> Result<Proposal> {
        let mut episode = self.take_open()?;
        let current = episode.current().cloned().ok_or(Error::EpisodeState("no current proposal"))?;
        if let Err(e) = self.send_feedback(&current, &episode.context, Feedback::REJECT) {
            self.episode = Some(episode);
            return Err(e);
        }
        episode.rejected.insert((current.device.clone(), current.action.clone()));

        let bids = match self.gather(&episode) {
            Ok(b) => b,
            Err(e) => {
                self.episode = Some(episode);
                return Err(e);
            }
        };
        let next = select(&bids, &episode);
        episode.last_round = bids;
        let result = match next {
            Some(p) => {
                episode.proposals.push(p.clone());
                Ok(p)
            }
            None => {
                episode.status = EpisodeStatus::Exhausted;
                Err(Error::Exhausted)
            }
        };
        self.episode = Some(episode);
        result
    }

    /// Closes the episode with the current proposal. The winner gets explicit
    /// positive feedback; every other backing model whose best proposal in
    /// the final round was compatible gets implicit negative feedback on it.
    pub fn accept(&mut self) -> Result<Proposal> {
        let mut episode = self.take_open()?;
        let winner = episode.current().cloned().ok_or(Error::EpisodeState("no current proposal"))?;
        let result = self.distribute(&episode, &winner);
        episode.status = EpisodeStatus::Accepted;
        self.episode = Some(episode);
        result.map(|()| winner)
    }

    /// Drops the open episode without any feedback.
    pub fn abandon(&mut self) {
        if self.episode.as_ref().is_some_and(|e| e.status == EpisodeStatus::Open) {
            self.episode = None;
        }
    }

    fn take_open(&mut self) -> Result<DecisionEpisode> {
        match self.episode.take() {
            Some(e) if e.status == EpisodeStatus::Open => Ok(e),
            other => {
                self.episode = other;
                Err(Error::EpisodeState("no open episode"))
            }
        }
    }

    fn backing_of(&self, device: &DeviceId) -> Result<&Backing> {
        self.registry
            .device(device)
            .map(|d| &d.backing)
            .ok_or_else(|| Error::Registry(format!("unknown device `{device}`")))
    }

    fn send_feedback(&mut self, proposal: &Proposal, context: &ContextSnapshot, feedback: Feedback) -> Result<()> {
        match self.backing_of(&proposal.device)?.clone() {
            Backing::Local => {
                let model = self
                    .models
                    .get_mut(&proposal.device)
                    .ok_or_else(|| Error::Registry(format!("no model for `{}`", proposal.device)))?;
                if feedback.kind == FeedbackKind::Implicit && model.hyperparameters().implicit_weight == 0.0 {
                    return Ok(());
                }
                model.on_feedback(proposal, context, feedback).map(|_| ())
            }
            Backing::External(name) => match self.controllers.get_mut(&name) {
                Some(c) => c.feedback(proposal, context, feedback),
                None => Err(Error::Registry(format!("controller `{name}` is not attached"))),
            },
        }
    }

    fn distribute(&mut self, episode: &DecisionEpisode, winner: &Proposal) -> Result<()> {
        self.send_feedback(winner, &episode.context, Feedback::ACCEPT)?;
        let winner_backing = self.backing_key(&winner.device)?;
        // best compatible proposal per losing backing model
        let mut losers: BTreeMap<String, &Bid> = BTreeMap::new();
        for bid in &episode.last_round {
            if !bid.proposal.is_compatible() {
                continue;
            }
            let key = self.backing_key(&bid.proposal.device)?;
            if key == winner_backing {
                continue;
            }
            let replace = losers.get(&key).is_none_or(|b| rank(bid, b) == Ordering::Less);
            if replace {
                losers.insert(key, bid);
            }
        }
        let losers: Vec<Proposal> = losers.into_values().map(|b| b.proposal.clone()).collect();
        for p in losers {
            self.send_feedback(&p, &episode.context, Feedback::IMPLICIT_NEGATIVE)?;
        }
        Ok(())
    }

    fn backing_key(&self, device: &DeviceId) -> Result<String> {
        Ok(match self.backing_of(device)? {
            Backing::Local => format!("local:{device}"),
            Backing::External(name) => format!("external:{name}"),
        })
    }

    /// Proposals of every device, skipping rejected pairs.
    fn gather(&mut self, episode: &DecisionEpisode) -> Result<Vec<Bid>> {
        let request = &episode.request;
        let context = &episode.context;
        let rejected = &episode.rejected;
        let mut bids = Vec::new();
        let mut external: BTreeMap<String, Vec<(DeviceId, ActionId)>> = BTreeMap::new();

        for spec in &self.registry.devices {
            let compatible = self.compatible(spec, request);
            if !compatible {
                let pair = (spec.id.clone(), request.action.clone());
                if !rejected.contains(&pair) {
                    bids.push(Bid {
                        proposal: Proposal::new(spec.id.clone(), request.action.clone(), 0.0),
                        radius: f64::INFINITY,
                    });
                }
                continue;
            }
            match &spec.backing {
                Backing::Local => {
                    let excluded: BTreeSet<ActionId> = rejected
                        .iter()
                        .filter(|(d, _)| d == &spec.id)
                        .filter_map(|(_, a)| a.clone())
                        .collect();
                    let model = self
                        .models
                        .get_mut(&spec.id)
                        .ok_or_else(|| Error::Registry(format!("no model for `{}`", spec.id)))?;
                    if let Some(bid) = model.propose(request, context, &excluded)? {
                        bids.push(bid);
                    }
                }
                Backing::External(name) => {
                    let pairs = external.entry(name.clone()).or_default();
                    let actions: Vec<&ActionId> = match &request.action {
                        Some(a) => alloc::vec![a],
                        None => spec.actions.iter().collect(),
                    };
                    for a in actions {
                        let key = (spec.id.clone(), Some(a.clone()));
                        if !rejected.contains(&key) {
                            pairs.push((spec.id.clone(), a.clone()));
                        }
                    }
                }
            }
        }

        for (name, pairs) in external {
            if pairs.is_empty() {
                continue;
            }
            let controller = self
                .controllers
                .get_mut(&name)
                .ok_or_else(|| Error::Registry(format!("controller `{name}` is not attached")))?;
            if let Some(p) = controller.propose(request, context, &pairs)? {
                let listed = p.action.as_ref().is_some_and(|a| pairs.iter().any(|(d, pa)| d == &p.device && pa == a));
                if !listed {
                    return Err(Error::Registry(format!(
                        "controller `{name}` proposed `{}` outside its candidates",
                        p.device
                    )));
                }
                if !(p.utility > 0.0 && p.utility <= 1.0) {
                    return Err(Error::Domain("external proposal utility must be in (0, 1]"));
                }
                bids.push(Bid { proposal: p, radius: f64::INFINITY });
            }
        }
        Ok(bids)
    }
}

/// Orders bids best-first: utility, then radius, device and action.
fn rank(a: &Bid, b: &Bid) -> Ordering {
    b.proposal
        .utility
        .total_cmp(&a.proposal.utility)
        .then(a.radius.total_cmp(&b.radius))
        .then(a.proposal.device.cmp(&b.proposal.device))
        .then(a.proposal.action.cmp(&b.proposal.action))
}

/// The best eligible bid. Zero-utility bids only qualify when the episode's
/// first round had no compatible proposal at all.
fn select(bids: &[Bid], episode: &DecisionEpisode) -> Option<Proposal> {
    bids.iter()
        .filter(|b| b.proposal.is_compatible() || !episode.first_round_positive)
        .filter(|b| !episode.rejected.contains(&(b.proposal.device.clone(), b.proposal.action.clone())))
        .min_by(|a, b| rank(a, b))
        .map(|b| b.proposal.clone())
}

#[cfg(test)]
mod tests;
