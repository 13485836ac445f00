//! Context-aware device selection engine.
//!
//! The crate learns, from accept/reject feedback alone, which action on which
//! device best answers a possibly under-specified request. It is split into
//! three layers:
//!
//! * [`context`]: typed context values, schemas, normalized distances and
//!   containment over snapshots.
//! * [`model`]: the per-device local utility model (state discovery, kNN
//!   initialization, logit-space reward updates, entropy-driven splitting).
//! * [`decider`]: the device registry and the arbitration loop that turns
//!   per-device proposals into one decision, with re-proposal on rejection.
//!
//! Everything here is `no_std` and only needs `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod context;
pub mod decider;
mod error;
mod ids;
pub mod model;

pub use context::{
    AttributeDescriptor, AttributeKind, ContextBound, ContextSchema, ContextSnapshot, ContextValue,
    WeightVector,
};
pub use decider::{
    Backing, ClassDecl, ClassHierarchy, DecisionEpisode, Decider, DeviceSpec, EpisodeStatus,
    ExternalController, Registry, StaticController,
};
pub use error::{Error, Result};
pub use ids::{ActionId, ClassId, DeviceId};
pub use model::{
    sigmoid_reward, state_entropy, ActionUtilityTable, Bid, DeviceLocalModel, Feedback, FeedbackEntry,
    FeedbackKind, FeedbackReport, Hyperparameters, LearnedState, Proposal, Request, State,
};
