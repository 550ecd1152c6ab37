//! Deterministic simulated short-video platform with injectable
//! ground-truth profiling.

pub mod generate;
pub mod policy;
pub mod service;

pub use generate::{generate_search_result, generate_video};
pub use policy::{AdMix, DurationParams, PolicyError, ProfilingPolicy};
pub use service::{FeedItem, FeedService, OpenSession, Phase, SessionState, SessionToken, SimError, Simulator};
