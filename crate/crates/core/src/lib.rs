//! Core library for sock-puppet audits of ad targeting on a short-video
//! platform: data model, simulated platform, agent orchestration, ad
//! classification and profiling statistics.

pub mod classify;
pub mod fixture;
pub mod jsonl;
pub mod lexicon;
pub mod model;
pub mod orchestrator;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod stats;

pub use model::*;
