//! File formats, persistence, parallel evaluation, the HTTP service and the
//! CLI around [`dsa_policy_core`].

pub mod batch;
pub mod capture;
pub mod cli;
pub mod inputs;
pub mod persist;
pub mod regions;
pub mod service;
pub mod shared;
pub mod synth;
pub mod taxonomy_file;
pub mod wire;

pub use dsa_policy_core as core;
