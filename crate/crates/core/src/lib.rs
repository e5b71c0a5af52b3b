//! Policy decision core for dynamic spectrum access.
//!
//! Requests are evaluated against a hierarchy of policies in four phases:
//! geographic inference ([`geo::infer_within`]), realization
//! ([`reasoner::realize`]), precedence ([`reasoner::decide`]) and explanation
//! ([`explain`]). Everything here is pure and allocation-only; file formats,
//! persistence and the HTTP service live in the `dsa-policy` crate.
#![no_std]

extern crate alloc;

pub mod dsl;
pub mod explain;
pub mod fixtures;
pub mod geo;
pub mod model;
pub mod reasoner;
pub mod satisfy;
pub mod store;
pub mod taxonomy;

pub use dsl::{parse_policy_doc, serialize_policy_doc, DslError, PolicyDocument};
pub use geo::{infer_within, parse_wkt_point, point_in_region, GeoPoint, Region, RegionStore};
pub use model::{
    effective_restrictions, Affiliation, ClassId, Decision, Effect, EvaluationResult,
    FrequencyRange, Hz, Policy, PolicyId, Reason, RegionId, Restriction, SpectrumRequest,
    TimeWindow,
};
pub use reasoner::{classify, decide, evaluate, evaluate_batch, implies, realize, EvalError};
pub use store::{PolicyStore, Snapshot, StoreError};
pub use taxonomy::Taxonomy;
