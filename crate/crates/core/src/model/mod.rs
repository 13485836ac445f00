//! Per-device local utility models.
//!
//! A model discretizes snapshot space into [`State`]s discovered on demand.
//! Each state keeps a utility in `(0, 1)` per action and a bounded cache of
//! the feedback received inside it. Requests are answered with the highest
//! utility over all states containing the current context; feedback moves
//! utilities in logit space and may split a state whose feedback has become
//! inconsistent.

mod entropy;
mod index;
mod reward;
mod split;
mod state;

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use crate::context::{snapshot_contains, ContextSchema, ContextSnapshot, WeightVector};
use crate::error::{Error, Result};
use crate::ids::{ActionId, ClassId, DeviceId};

pub use entropy::{binary_entropy, state_entropy};
pub use reward::{logit, sigmoid, sigmoid_reward, MAX_LOGIT};
pub use split::{best_split, candidate_splits, SplitCandidate, SplitRule};
pub use state::State;

/// Default utility of an action nobody has given feedback on.
pub const NEUTRAL_UTILITY: f64 = 0.5;

/// A user request: an optional device class and an optional action. Both
/// empty means "act".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    #[serde(default)]
    pub class: Option<ClassId>,
    #[serde(default)]
    pub action: Option<ActionId>,
    #[serde(default)]
    pub timestamp: i64,
}

impl Request {
    pub fn act() -> Self {
        Self::default()
    }

    pub fn new(class: Option<&str>, action: Option<&str>) -> Self {
        Self { class: class.map(ClassId::from), action: action.map(ActionId::from), timestamp: 0 }
    }
}

/// `<device, action, utility>`. Utility 0 marks a device that cannot serve
/// the request; its action is the requested one, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub device: DeviceId,
    pub action: Option<ActionId>,
    pub utility: f64,
}

impl Proposal {
    pub fn new(device: impl Into<DeviceId>, action: Option<ActionId>, utility: f64) -> Self {
        Self { device: device.into(), action, utility }
    }

    pub fn is_compatible(&self) -> bool {
        self.utility > 0.0
    }
}

/// A proposal together with the radius of the state it came from, used for
/// tie-breaking (smaller states carry more specific evidence).
#[derive(Debug, Clone, PartialEq)]
pub struct Bid {
    pub proposal: Proposal,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackKind {
    /// Given by the user about a proposal they saw.
    #[default]
    Explicit,
    /// Inferred for models whose proposal lost to another device's.
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Feedback {
    pub positive: bool,
    pub kind: FeedbackKind,
}

impl Feedback {
    pub const ACCEPT: Feedback = Feedback { positive: true, kind: FeedbackKind::Explicit };
    pub const REJECT: Feedback = Feedback { positive: false, kind: FeedbackKind::Explicit };
    pub const IMPLICIT_NEGATIVE: Feedback = Feedback { positive: false, kind: FeedbackKind::Implicit };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub seq: u64,
    pub context: ContextSnapshot,
    pub proposal: Proposal,
    pub positive: bool,
    #[serde(default)]
    pub kind: FeedbackKind,
}

/// Utility per action for one state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionUtilityTable(pub BTreeMap<ActionId, f64>);

impl ActionUtilityTable {
    pub fn uniform<'a>(actions: impl IntoIterator<Item = &'a ActionId>, u: f64) -> Self {
        Self(actions.into_iter().map(|a| (a.clone(), u)).collect())
    }

    pub fn get(&self, action: &ActionId) -> Option<f64> {
        self.0.get(action).copied()
    }

    pub fn set(&mut self, action: &ActionId, u: f64) {
        if let Some(slot) = self.0.get_mut(action) {
            *slot = u;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ActionId, f64)> {
        self.0.iter().map(|(a, u)| (a, *u))
    }
}

/// A state with its utilities and feedback cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedState {
    pub state: State,
    pub utilities: ActionUtilityTable,
    pub cache: VecDeque<FeedbackEntry>,
}

impl LearnedState {
    pub fn entropy(&self) -> f64 {
        state_entropy(&self.cache)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    /// Default state half-width as a fraction of each numeric/vector range.
    pub radius_fraction: f64,
    /// Default state half-width as a fraction of each cyclic period
    /// (1800 s of a day).
    pub cyclic_radius_fraction: f64,
    /// Neighbours used to initialize a new state.
    pub k: usize,
    /// Logit step of one explicit feedback.
    pub reward: f64,
    /// Entropy (bits) above which a state looks for a split.
    pub entropy_threshold: f64,
    /// Minimum information gain (bits) for a split to be applied.
    pub required_gain: f64,
    /// Cut points per continuous attribute.
    pub split_points: usize,
    pub cache_capacity: usize,
    /// Number of recent explicit feedbacks inspected for a disparity.
    pub recovery_window: usize,
    /// A disparity only triggers while the utility is above this value.
    pub recovery_utility: f64,
    /// Step multiplier for implicit feedback.
    pub implicit_weight: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            radius_fraction: 0.05,
            cyclic_radius_fraction: 1800.0 / 86400.0,
            k: 3,
            reward: 1.0,
            entropy_threshold: 0.9,
            required_gain: 0.2,
            split_points: 8,
            cache_capacity: 200,
            recovery_window: 5,
            recovery_utility: 0.6,
            implicit_weight: 0.25,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::ModelConfig(what.to_string()));
        if !(self.radius_fraction > 0.0 && self.radius_fraction <= 1.0) {
            return bad("radius_fraction must be in (0, 1]");
        }
        if !(self.cyclic_radius_fraction > 0.0 && self.cyclic_radius_fraction <= 0.5) {
            return bad("cyclic_radius_fraction must be in (0, 0.5]");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(self.reward.is_finite() && self.reward > 0.0) {
            return bad("reward must be positive");
        }
        if !(self.entropy_threshold.is_finite() && self.entropy_threshold >= 0.0) {
            return bad("entropy_threshold must be non-negative");
        }
        if !self.required_gain.is_finite() {
            return bad("required_gain must be finite");
        }
        if self.split_points == 0 {
            return bad("split_points must be at least 1");
        }
        if self.cache_capacity == 0 {
            return bad("cache_capacity must be at least 1");
        }
        if self.recovery_window == 0 {
            return bad("recovery_window must be at least 1");
        }
        if !(0.0..1.0).contains(&self.recovery_utility) {
            return bad("recovery_utility must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.implicit_weight) {
            return bad("implicit_weight must be in [0, 1]");
        }
        Ok(())
    }

    fn step(&self, kind: FeedbackKind) -> f64 {
        match kind {
            FeedbackKind::Explicit => self.reward,
            FeedbackKind::Implicit => self.reward * self.implicit_weight,
        }
    }
}

/// What one call to [`DeviceLocalModel::on_feedback`] changed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FeedbackReport {
    pub states_updated: usize,
    pub fresh_resets: usize,
    pub recoveries: usize,
    pub splits: usize,
}

/// The learned local model of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceLocalModel {
    device: DeviceId,
    actions: BTreeSet<ActionId>,
    /// Every class the device belongs to, ancestors included.
    #[serde(default)]
    classes: BTreeSet<ClassId>,
    schema: ContextSchema,
    weights: WeightVector,
    hyper: Hyperparameters,
    states: Vec<LearnedState>,
    next_state_id: u64,
    next_seq: u64,
    #[serde(skip)]
    index: index::StateIndex,
}

impl DeviceLocalModel {
    pub fn new(
        device: impl Into<DeviceId>,
        actions: impl IntoIterator<Item = ActionId>,
        schema: ContextSchema,
        hyper: Hyperparameters,
    ) -> Result<Self> {
        let weights = WeightVector::uniform(schema.len());
        let model = Self {
            device: device.into(),
            actions: actions.into_iter().collect(),
            classes: BTreeSet::new(),
            schema,
            weights,
            hyper,
            states: Vec::new(),
            next_state_id: 0,
            next_seq: 0,
            index: Default::default(),
        };
        model.check_config()?;
        Ok(model)
    }

    pub fn with_classes(mut self, classes: impl IntoIterator<Item = ClassId>) -> Self {
        self.classes = classes.into_iter().collect();
        self
    }

    pub fn with_weights(mut self, weights: WeightVector) -> Result<Self> {
        self.schema.check_len(weights.len())?;
        self.weights = weights;
        Ok(self)
    }

    fn check_config(&self) -> Result<()> {
        if self.actions.is_empty() {
            return Err(Error::ModelConfig(format!("device `{}` has no actions", self.device)));
        }
        self.schema.check_len(self.weights.len())?;
        self.hyper.validate()
    }

    /// Full structural check, for models loaded from disk.
    pub fn validate(&self) -> Result<()> {
        self.check_config()?;
        let mut ids = BTreeSet::new();
        for ls in &self.states {
            if !ids.insert(ls.state.id) || ls.state.id >= self.next_state_id {
                return Err(Error::Invariant("state ids must be unique and below next_state_id"));
            }
            self.schema.check_len(ls.state.bounds.len())?;
            if !ls.state.contains(&ls.state.mid)? {
                return Err(Error::Invariant("a state must contain its mid snapshot"));
            }
            if ls.utilities.0.keys().ne(self.actions.iter()) {
                return Err(Error::Invariant("utility table must cover exactly the action set"));
            }
            if ls.utilities.0.values().any(|u| !(*u > 0.0 && *u < 1.0)) {
                return Err(Error::Invariant("utilities must lie strictly inside (0, 1)"));
            }
            if ls.cache.len() > self.hyper.cache_capacity {
                return Err(Error::Invariant("feedback cache exceeds its capacity"));
            }
        }
        Ok(())
    }

    pub fn device(&self) -> &DeviceId {
        &self.device
    }

    pub fn actions(&self) -> &BTreeSet<ActionId> {
        &self.actions
    }

    pub fn classes(&self) -> &BTreeSet<ClassId> {
        &self.classes
    }

    pub fn schema(&self) -> &ContextSchema {
        &self.schema
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn states(&self) -> &[LearnedState] {
        &self.states
    }

    pub fn state(&self, id: u64) -> Option<&LearnedState> {
        self.states.iter().find(|s| s.state.id == id)
    }

    fn index_of(&self, id: u64) -> Option<usize> {
        self.states.iter().position(|s| s.state.id == id)
    }

    fn alloc_state_id(&mut self) -> u64 {
        let id = self.next_state_id;
        self.next_state_id += 1;
        id
    }

    /// `(T = none or d in T) and (a_req = none or a_req in A_d)`.
    pub fn is_compatible(&self, request: &Request) -> bool {
        request.class.as_ref().is_none_or(|c| self.classes.contains(c))
            && request.action.as_ref().is_none_or(|a| self.actions.contains(a))
    }

    /// Ids of the states containing `context`, in storage order.
    pub fn containing_states(&self, context: &ContextSnapshot) -> Result<Vec<u64>> {
        let mut out = Vec::new();
        for ls in &self.states {
            if ls.state.contains(context)? {
                out.push(ls.state.id);
            }
        }
        Ok(out)
    }

    /// Positions of the states containing `context`, using the flat index
    /// when it is current.
    fn containing_positions(&mut self, context: &ContextSnapshot) -> Result<Vec<usize>> {
        if self.sync_index() {
            if let Some(q) = self.index.query(&self.schema, context) {
                return Ok((0..self.states.len())
                    .filter(|&i| self.index.contains(i, &q, &self.states[i].state, context))
                    .collect());
            }
        }
        let mut out = Vec::new();
        for (i, ls) in self.states.iter().enumerate() {
            if ls.state.contains(context)? {
                out.push(i);
            }
        }
        Ok(out)
    }

    /// Brings the flat index up to date; false if it cannot be used.
    fn sync_index(&mut self) -> bool {
        if self.index.len() != self.states.len() {
            self.index.rebuild(&self.schema, self.states.iter().map(|ls| &ls.state));
        }
        self.index.len() == self.states.len()
    }

    fn push_state(&mut self, ls: LearnedState) {
        let at = self.states.len();
        let current = self.index.len() == at;
        if !(current && self.index.insert(&self.schema, at, &ls.state)) {
            self.index.clear();
        }
        self.states.push(ls);
    }

    /// Inserts a state with explicit bounds and utilities. Used to restore or
    /// hand-build models; the state gets a fresh id, which is returned.
    pub fn insert_state(&mut self, mut state: State, utilities: ActionUtilityTable) -> Result<u64> {
        self.schema.check_len(state.bounds.len())?;
        if utilities.0.keys().ne(self.actions.iter()) {
            return Err(Error::Invariant("utility table must cover exactly the action set"));
        }
        if utilities.0.values().any(|u| !(*u > 0.0 && *u < 1.0)) {
            return Err(Error::Domain("utility must lie strictly inside (0, 1)"));
        }
        state.id = self.alloc_state_id();
        let id = state.id;
        self.push_state(LearnedState { state, utilities, cache: VecDeque::new() });
        Ok(id)
    }

    /// Creates a state of default radius around `context`. Utilities start at
    /// 0.5 in an empty model and are initialized from the nearest states
    /// otherwise.
    pub fn create_state(&mut self, context: &ContextSnapshot) -> Result<u64> {
        let id = self.alloc_state_id();
        let state = State::around(&self.schema, id, context, &self.hyper)?;
        let utilities = if self.states.is_empty() {
            ActionUtilityTable::uniform(&self.actions, NEUTRAL_UTILITY)
        } else if self.sync_index() {
            self.knn_indexed(&state)?
        } else {
            self.knn_initialize(&state)?
        };
        self.push_state(LearnedState { state, utilities, cache: VecDeque::new() });
        Ok(id)
    }

    /// Initial utilities for `new_state` from its `k` nearest states:
    /// `0.5 + (1/k) * sum (u_i - 0.5) / (dist_i / r_new + 1)`.
    ///
    /// With fewer than `k` states all are used and the divisor stays `k`. A
    /// zero-radius new state gives no weight to neighbours at positive
    /// distance and full weight to neighbours at distance 0.
    pub fn knn_initialize(&self, new_state: &State) -> Result<ActionUtilityTable> {
        let mut ranked = Nearest::new(self.hyper.k);
        for ls in &self.states {
            if let Some(d) = ls.state.distance_within(&self.schema, &new_state.mid, &self.weights, ranked.limit())? {
                ranked.offer(d, ls);
            }
        }
        Ok(self.knn_table(new_state, &ranked.0))
    }

    /// [`Self::knn_initialize`] over the flat index; same neighbours, same
    /// arithmetic.
    fn knn_indexed(&self, new_state: &State) -> Result<ActionUtilityTable> {
        let Some(q) = self.index.query(&self.schema, &new_state.mid) else {
            return self.knn_initialize(new_state);
        };
        let mut ranked = Nearest::new(self.hyper.k);
        let weights = self.weights.as_slice();
        for (i, ls) in self.states.iter().enumerate() {
            let d = self.index.distance_within(&self.schema, i, &q, weights, &ls.state, &new_state.mid, ranked.limit());
            if let Some(d) = d {
                ranked.offer(d, ls);
            }
        }
        Ok(self.knn_table(new_state, &ranked.0))
    }

    fn knn_table(&self, new_state: &State, ranked: &[(f64, &LearnedState)]) -> ActionUtilityTable {
        let k = self.hyper.k as f64;
        let r = new_state.radius;
        let mut table = ActionUtilityTable::uniform(&self.actions, NEUTRAL_UTILITY);
        for (action, slot) in table.0.iter_mut() {
            let mut sum = 0.0;
            for (dist, ls) in ranked {
                let u = ls.utilities.get(action).unwrap_or(NEUTRAL_UTILITY);
                let ratio = if *dist == 0.0 { 0.0 } else { dist / r };
                sum += (u - NEUTRAL_UTILITY) / (ratio + 1.0);
            }
            *slot = NEUTRAL_UTILITY + sum / k;
        }
        table
    }

    /// Makes sure some state contains `context`; returns the created id if one
    /// had to be made.
    pub fn ensure_state(&mut self, context: &ContextSnapshot) -> Result<Option<u64>> {
        for ls in &self.states {
            if ls.state.contains(context)? {
                return Ok(None);
            }
        }
        self.create_state(context).map(Some)
    }

    /// Answers a request: the best action over all containing states, or
    /// utility 0 when the device cannot serve the request.
    pub fn on_receive_request(
        &mut self,
        request: &Request,
        context: &ContextSnapshot,
    ) -> Result<Proposal> {
        match self.propose(request, context, &BTreeSet::new())? {
            Some(bid) => Ok(bid.proposal),
            None => Err(Error::Invariant("an unrestricted request always yields a proposal")),
        }
    }

    /// Like [`Self::on_receive_request`], skipping `excluded` actions.
    /// Returns `None` when every requested action is excluded.
    ///
    /// Ties on utility go to the smaller state radius, then the smaller
    /// action id.
    pub fn propose(
        &mut self,
        request: &Request,
        context: &ContextSnapshot,
        excluded: &BTreeSet<ActionId>,
    ) -> Result<Option<Bid>> {
        self.check_config()?;
        self.schema.check_len(context.len())?;
        if !self.is_compatible(request) {
            return Ok(Some(Bid {
                proposal: Proposal::new(self.device.clone(), request.action.clone(), 0.0),
                radius: f64::INFINITY,
            }));
        }
        let mut containing = self.containing_positions(context)?;
        if containing.is_empty() {
            self.create_state(context)?;
            containing.push(self.states.len() - 1);
        }

        let requested: Vec<&ActionId> = match &request.action {
            Some(a) => alloc::vec![a],
            None => self.actions.iter().collect(),
        };
        let mut best: Option<(f64, f64, &ActionId)> = None;
        for ls in containing.iter().map(|&i| &self.states[i]) {
            for &action in requested.iter().filter(|a| !excluded.contains(**a)) {
                let u = ls.utilities.get(action).unwrap_or(NEUTRAL_UTILITY);
                let candidate = (u, ls.state.radius, action);
                if best.as_ref().is_none_or(|b| rank(&candidate, b) == Ordering::Less) {
                    best = Some(candidate);
                }
            }
        }
        Ok(best.map(|(u, radius, action)| Bid {
            proposal: Proposal::new(self.device.clone(), Some(action.clone()), u),
            radius,
        }))
    }

    /// Incorporates feedback on `proposal` given in `context` into every state
    /// containing the context.
    ///
    /// Per state: a negative explicit feedback arriving while the state is
    /// still fresh from initialization first resets its utilities to 0.5;
    /// the proposal's action is then moved by one (weighted) reward step;
    /// the entry is cached; explicit feedback runs the disparity check; and a
    /// state whose entropy exceeds the threshold is split along the
    /// best-gain candidate if that gain exceeds `required_gain`.
    pub fn on_feedback(
        &mut self,
        proposal: &Proposal,
        context: &ContextSnapshot,
        feedback: Feedback,
    ) -> Result<FeedbackReport> {
        if proposal.device != self.device {
            return Err(Error::ForeignProposal {
                model: self.device.to_string(),
                proposal: proposal.device.to_string(),
            });
        }
        self.schema.check_len(context.len())?;
        let mut report = FeedbackReport::default();
        let action = match &proposal.action {
            Some(a) if self.actions.contains(a) => a.clone(),
            // proposals for actions this device lacks carry no information
            _ => return Ok(report),
        };

        let seq = self.next_seq;
        self.next_seq += 1;
        let step = self.hyper.step(feedback.kind);
        let explicit = feedback.kind == FeedbackKind::Explicit;

        let ids: Vec<u64> =
            self.containing_positions(context)?.into_iter().map(|i| self.states[i].state.id).collect();
        for id in ids {
            let Some(idx) = self.index_of(id) else { continue };
            let capacity = self.hyper.cache_capacity;
            let ls = &mut self.states[idx];

            if explicit {
                if ls.state.fresh_init && !feedback.positive {
                    ls.utilities = ActionUtilityTable::uniform(&self.actions, NEUTRAL_UTILITY);
                    report.fresh_resets += 1;
                }
                ls.state.fresh_init = false;
            }

            let u = ls.utilities.get(&action).unwrap_or(NEUTRAL_UTILITY);
            ls.utilities.set(&action, sigmoid_reward(u, step, feedback.positive)?);

            ls.cache.push_back(FeedbackEntry {
                seq,
                context: context.clone(),
                proposal: proposal.clone(),
                positive: feedback.positive,
                kind: feedback.kind,
            });
            while ls.cache.len() > capacity {
                ls.cache.pop_front();
            }
            report.states_updated += 1;

            if explicit && self.recover_on_disparity(id, &action) {
                report.recoveries += 1;
            }

            let idx = self.index_of(id).ok_or(Error::Invariant("state vanished during feedback"))?;
            if self.states[idx].entropy() > self.hyper.entropy_threshold {
                let ls = &self.states[idx];
                let candidates = candidate_splits(
                    &self.schema,
                    &ls.state,
                    ls.cache.iter(),
                    self.hyper.split_points,
                )?;
                if let Some(best) = best_split(candidates) {
                    if best.gain > self.hyper.required_gain {
                        self.apply_split(id, best)?;
                        report.splits += 1;
                    }
                }
            }
        }
        Ok(report)
    }

    /// Resets `action` in state `state_id` to 0.5 and forgets its cached
    /// feedback when the last `recovery_window` explicit feedbacks for it are
    /// all, or all but one, negative while its utility is still above
    /// `recovery_utility`. Returns whether a reset happened.
    pub fn recover_on_disparity(&mut self, state_id: u64, action: &ActionId) -> bool {
        let Some(idx) = self.index_of(state_id) else { return false };
        let m = self.hyper.recovery_window;
        let ls = &mut self.states[idx];
        let recent: Vec<bool> = ls
            .cache
            .iter()
            .rev()
            .filter(|e| e.kind == FeedbackKind::Explicit && e.proposal.action.as_ref() == Some(action))
            .take(m)
            .map(|e| e.positive)
            .collect();
        if recent.len() < m {
            return false;
        }
        let negatives = recent.iter().filter(|p| !**p).count();
        let u = ls.utilities.get(action).unwrap_or(NEUTRAL_UTILITY);
        if negatives + 1 >= m && u > self.hyper.recovery_utility {
            ls.utilities.set(action, NEUTRAL_UTILITY);
            ls.cache.retain(|e| e.proposal.action.as_ref() != Some(action));
            true
        } else {
            false
        }
    }

    /// Replaces state `state_id` with the two children of `split`. The
    /// parent's cache is distributed to the child containing each entry and
    /// each child's utilities are rebuilt by replaying its slice from 0.5.
    pub fn apply_split(&mut self, state_id: u64, split: SplitCandidate) -> Result<(u64, u64)> {
        let idx = self.index_of(state_id).ok_or(Error::Invariant("split of an unknown state"))?;
        let mut sides = Vec::with_capacity(self.states[idx].cache.len());
        for e in &self.states[idx].cache {
            let l = snapshot_contains(&split.left.bounds, &e.context)?;
            let r = snapshot_contains(&split.right.bounds, &e.context)?;
            if l == r {
                return Err(Error::Invariant("split children must partition the parent's cache"));
            }
            sides.push(l);
        }

        let current = self.index.len() == self.states.len();
        let parent = self.states.remove(idx);
        let mut left_cache = VecDeque::new();
        let mut right_cache = VecDeque::new();
        for (e, is_left) in parent.cache.into_iter().zip(sides) {
            if is_left {
                left_cache.push_back(e);
            } else {
                right_cache.push_back(e);
            }
        }

        let mut left = split.left;
        let mut right = split.right;
        left.id = self.alloc_state_id();
        right.id = self.alloc_state_id();
        left.fresh_init = false;
        right.fresh_init = false;
        let ids = (left.id, right.id);

        let left_utils = self.replay(&left_cache)?;
        let right_utils = self.replay(&right_cache)?;
        if current {
            self.index.remove(idx);
            if !(self.index.insert(&self.schema, idx, &right) && self.index.insert(&self.schema, idx, &left)) {
                self.index.clear();
            }
        } else {
            self.index.clear();
        }
        self.states.insert(idx, LearnedState { state: right, utilities: right_utils, cache: right_cache });
        self.states.insert(idx, LearnedState { state: left, utilities: left_utils, cache: left_cache });
        Ok(ids)
    }

    /// Every split candidate of state `state_id` scored against its cache.
    pub fn candidate_splits(&self, state_id: u64) -> Result<Vec<SplitCandidate>> {
        let ls = self.state(state_id).ok_or(Error::Invariant("unknown state"))?;
        candidate_splits(&self.schema, &ls.state, ls.cache.iter(), self.hyper.split_points)
    }

    fn replay(&self, entries: &VecDeque<FeedbackEntry>) -> Result<ActionUtilityTable> {
        let mut table = ActionUtilityTable::uniform(&self.actions, NEUTRAL_UTILITY);
        let mut ordered: Vec<&FeedbackEntry> = entries.iter().collect();
        ordered.sort_by_key(|e| e.seq);
        for e in ordered {
            if let Some(a) = e.proposal.action.as_ref() {
                if let Some(u) = table.get(a) {
                    table.set(a, sigmoid_reward(u, self.hyper.step(e.kind), e.positive)?);
                }
            }
        }
        Ok(table)
    }
}

/// The `k` nearest states seen so far, sorted by distance then state id.
struct Nearest<'a>(Vec<(f64, &'a LearnedState)>, usize);

impl<'a> Nearest<'a> {
    fn new(k: usize) -> Self {
        Self(Vec::with_capacity(k + 1), k)
    }

    /// Distance a candidate must not exceed to have a chance of entering.
    fn limit(&self) -> f64 {
        if self.1 > 0 && self.0.len() == self.1 { self.0[self.1 - 1].0 } else { f64::INFINITY }
    }

    fn offer(&mut self, d: f64, ls: &'a LearnedState) {
        let key = |e: &(f64, &LearnedState)| (e.0, e.1.state.id);
        let at = self.0.partition_point(|e| {
            let (ed, eid) = key(e);
            ed.total_cmp(&d).then(eid.cmp(&ls.state.id)) == Ordering::Less
        });
        self.0.insert(at, (d, ls));
        self.0.truncate(self.1);
    }
}

/// Orders `(utility, radius, action)` candidates best-first.
fn rank(a: &(f64, f64, &ActionId), b: &(f64, f64, &ActionId)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(b.2))
}
