//! The feed service: per-user sessions over the generator.
//!
//! State is partitioned by user. Each user's items come from a stream keyed
//! by (scenario seed, user id, stream name, item counter), so how requests
//! from different users interleave never changes what any user sees.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Engagement, ExposureRecord, ModelError, Topic, UserProfile, VideoRecord};
use crate::rng::{derive_hex, derive_rng};
use crate::sim::generate::{generate_search_result, generate_video};
use crate::sim::policy::ProfilingPolicy;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("no open session for user `{0}`")]
    SessionClosed(String),
    #[error("user `{0}` already has an open session")]
    SessionAlreadyOpen(String),
    #[error("user `{user_id}` was registered with a different profile")]
    ProfileMismatch { user_id: String },
    #[error("video `{video_id}` was not served to `{user_id}` in the current session")]
    UnknownVideoForUser { user_id: String, video_id: String },
    #[error("engagement for video `{video_id}` conflicts with the recorded one")]
    EngagementConflict { video_id: String },
    #[error("invalid engagement: {0}")]
    InvalidEngagement(ModelError),
    #[error("request not allowed in a {0:?} session")]
    WrongPhase(Phase),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("service unreachable: {0}")]
    ServiceUnreachable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Interest seeding: items come from search results.
    Seeding,
    /// Main collection: items come from the recommendation feed.
    Collection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenSession {
    pub profile: UserProfile,
    pub session_index: u32,
    pub phase: Phase,
    /// Time charged for a skipped item.
    pub skip_cost_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionToken {
    pub token: String,
    pub user_id: String,
    pub session_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedItem {
    pub position: u32,
    pub sim_time_s: f64,
    pub video: VideoRecord,
}

/// Operations the agents need from a platform. Implemented in-process by
/// [`Simulator`]; remote adapters implement it over the wire.
pub trait FeedService: Send + Sync {
    fn open_session(&self, req: OpenSession) -> Result<SessionToken, SimError>;
    fn next_feed_item(&self, user_id: &str) -> Result<FeedItem, SimError>;
    fn next_search_result(&self, user_id: &str, query: &str, topic: Topic) -> Result<FeedItem, SimError>;
    fn record_engagement(&self, user_id: &str, video_id: &str, engagement: Engagement) -> Result<(), SimError>;
    /// Ends the session and returns its exposure log. Rows never engaged
    /// with are closed out as skipped.
    fn close_session(&self, user_id: &str) -> Result<Vec<ExposureRecord>, SimError>;
}

/// Per-user generator position and clock.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub user_id: String,
    /// Items served from the recommendation feed over the user's lifetime.
    pub served_count: u64,
    /// Items served from search over the user's lifetime.
    pub search_count: u64,
    /// Simulated seconds spent in the current (or last) session.
    pub elapsed_sim_s: f64,
}

struct OpenState {
    session_index: u32,
    phase: Phase,
    start_s: f64,
    skip_cost_s: f64,
    rows: Vec<ExposureRecord>,
    index_by_video: HashMap<String, usize>,
}

struct UserSlot {
    profile: UserProfile,
    state: SessionState,
    open: Option<OpenState>,
}

pub struct Simulator {
    seed: u64,
    policy: ProfilingPolicy,
    users: RwLock<HashMap<String, Arc<Mutex<UserSlot>>>>,
}

impl Simulator {
    pub fn new(seed: u64, policy: ProfilingPolicy) -> Self {
        Simulator {
            seed,
            policy,
            users: RwLock::new(HashMap::new()),
        }
    }

    pub fn policy(&self) -> &ProfilingPolicy {
        &self.policy
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn session_state(&self, user_id: &str) -> Option<SessionState> {
        let slot = self.slot(user_id).ok()?;
        let guard = slot.lock().unwrap();
        Some(guard.state.clone())
    }

    fn slot(&self, user_id: &str) -> Result<Arc<Mutex<UserSlot>>, SimError> {
        self.users
            .read()
            .unwrap()
            .get(user_id)
            .cloned()
            .ok_or_else(|| SimError::UnknownUser(user_id.to_string()))
    }

    fn serve(
        &self,
        user_id: &str,
        want: Phase,
        make: impl FnOnce(&UserProfile, &mut SessionState) -> VideoRecord,
    ) -> Result<FeedItem, SimError> {
        let slot = self.slot(user_id)?;
        let mut guard = slot.lock().unwrap();
        let UserSlot { profile, state, open } = &mut *guard;
        let open = open.as_mut().ok_or_else(|| SimError::SessionClosed(user_id.to_string()))?;
        if open.phase != want {
            return Err(SimError::WrongPhase(open.phase));
        }
        let video = make(profile, state);
        let position = open.rows.len() as u32 + 1;
        let sim_time_s = open.start_s + state.elapsed_sim_s;
        open.index_by_video.insert(video.video_id.clone(), open.rows.len());
        open.rows.push(ExposureRecord {
            user_id: user_id.to_string(),
            session_index: open.session_index,
            position,
            sim_time_s,
            engaged: Engagement::default(),
            video: video.clone(),
        });
        Ok(FeedItem {
            position,
            sim_time_s,
            video,
        })
    }
}

impl FeedService for Simulator {
    fn open_session(&self, req: OpenSession) -> Result<SessionToken, SimError> {
        if req.session_index < 1 {
            return Err(SimError::InvalidRequest("session_index starts at 1".into()));
        }
        if !(req.skip_cost_s.is_finite() && req.skip_cost_s >= 0.0) {
            return Err(SimError::InvalidRequest("skip_cost_s must be non-negative".into()));
        }
        let user_id = req.profile.user_id.clone();
        let slot = {
            let mut users = self.users.write().unwrap();
            users
                .entry(user_id.clone())
                .or_insert_with(|| {
                    Arc::new(Mutex::new(UserSlot {
                        profile: req.profile.clone(),
                        state: SessionState {
                            user_id: user_id.clone(),
                            served_count: 0,
                            search_count: 0,
                            elapsed_sim_s: 0.0,
                        },
                        open: None,
                    }))
                })
                .clone()
        };
        let mut guard = slot.lock().unwrap();
        if guard.profile != req.profile {
            return Err(SimError::ProfileMismatch { user_id });
        }
        if guard.open.is_some() {
            return Err(SimError::SessionAlreadyOpen(user_id));
        }
        let start_s = match req.phase {
            Phase::Seeding => 0.0,
            Phase::Collection => req.session_index as f64 * SECONDS_PER_DAY,
        };
        guard.state.elapsed_sim_s = 0.0;
        guard.open = Some(OpenState {
            session_index: req.session_index,
            phase: req.phase,
            start_s,
            skip_cost_s: req.skip_cost_s,
            rows: Vec::new(),
            index_by_video: HashMap::new(),
        });
        let phase = match req.phase {
            Phase::Seeding => "seeding",
            Phase::Collection => "collection",
        };
        Ok(SessionToken {
            token: derive_hex(self.seed, &["session", &user_id, phase, &req.session_index.to_string()], 16),
            user_id,
            session_index: req.session_index,
        })
    }

    fn next_feed_item(&self, user_id: &str) -> Result<FeedItem, SimError> {
        self.serve(user_id, Phase::Collection, |profile, state| {
            let counter = state.served_count.to_string();
            let key = [user_id, "feed", counter.as_str()];
            let mut rng = derive_rng(self.seed, &key);
            let id = format!("v{}", derive_hex(self.seed, &key, 16));
            state.served_count += 1;
            generate_video(profile, &self.policy, &mut rng, id)
        })
    }

    fn next_search_result(&self, user_id: &str, query: &str, topic: Topic) -> Result<FeedItem, SimError> {
        self.serve(user_id, Phase::Seeding, |profile, state| {
            let counter = state.search_count.to_string();
            let key = [user_id, "search", query, counter.as_str()];
            let mut rng = derive_rng(self.seed, &key);
            let id = format!("s{}", derive_hex(self.seed, &key, 16));
            state.search_count += 1;
            generate_search_result(profile, &self.policy, topic, &mut rng, id)
        })
    }

    fn record_engagement(&self, user_id: &str, video_id: &str, engagement: Engagement) -> Result<(), SimError> {
        engagement.validate().map_err(SimError::InvalidEngagement)?;
        let slot = self.slot(user_id)?;
        let mut guard = slot.lock().unwrap();
        let UserSlot { state, open, .. } = &mut *guard;
        let unknown = || SimError::UnknownVideoForUser {
            user_id: user_id.to_string(),
            video_id: video_id.to_string(),
        };
        let open = open.as_mut().ok_or_else(unknown)?;
        let idx = *open.index_by_video.get(video_id).ok_or_else(unknown)?;
        let row = &mut open.rows[idx];
        if row.engaged == engagement {
            return Ok(());
        }
        if !row.engaged.is_empty() {
            return Err(SimError::EngagementConflict {
                video_id: video_id.to_string(),
            });
        }
        row.engaged = engagement;
        state.elapsed_sim_s += if engagement.watched_full {
            row.video.duration_s
        } else {
            open.skip_cost_s
        };
        Ok(())
    }

    fn close_session(&self, user_id: &str) -> Result<Vec<ExposureRecord>, SimError> {
        let slot = self.slot(user_id)?;
        let mut guard = slot.lock().unwrap();
        let open = guard
            .open
            .take()
            .ok_or_else(|| SimError::SessionClosed(user_id.to_string()))?;
        let mut rows = open.rows;
        for row in &mut rows {
            if row.engaged.is_empty() {
                row.engaged = Engagement::skip();
            }
        }
        Ok(rows)
    }
}
