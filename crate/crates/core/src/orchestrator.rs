//! Sock-puppet agents: interest seeding, paired daily sessions, and the full
//! audit run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::scan_topic;
use crate::lexicon::Lexicon;
use crate::model::{AgentPair, Engagement, ExposureRecord, Topic, UserProfile, VideoRecord};
use crate::rng::derive_unit;
use crate::scenario::Scenario;
use crate::sim::{FeedService, OpenSession, Phase, SimError, Simulator};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Service(#[from] SimError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error("pair {pair_id} desynchronised at round {round}: {detail}")]
    PairDesync { pair_id: String, round: usize, detail: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Config(#[from] crate::scenario::ConfigError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictorError {
    #[error("interaction predictor unavailable: {0}")]
    PredictorUnavailable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedingConfig {
    pub queries: BTreeMap<Topic, Vec<String>>,
    pub relevant_target: u32,
    pub candidate_cap: u32,
    pub predictor_error_rate: f64,
}

impl Default for SeedingConfig {
    fn default() -> Self {
        let q = |items: &[&str]| items.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        SeedingConfig {
            queries: BTreeMap::from([
                (Topic::Beauty, q(&["makeup", "skincare", "cosmetics"])),
                (Topic::Fitness, q(&["workout", "gym", "nutrition"])),
                (Topic::Gaming, q(&["gaming", "consoles", "streamers"])),
                (Topic::Politics, q(&["political news", "voting", "politicians"])),
            ]),
            relevant_target: 25,
            candidate_cap: 51,
            predictor_error_rate: 0.04,
        }
    }
}

impl SeedingConfig {
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.relevant_target > self.candidate_cap {
            return Err((
                "relevant_target".into(),
                format!("{} exceeds candidate_cap {}", self.relevant_target, self.candidate_cap),
            ));
        }
        if !(0.0..=1.0).contains(&self.predictor_error_rate) {
            return Err(("predictor_error_rate".into(), "must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn queries_for(&self, topic: Topic) -> &[String] {
        self.queries.get(&topic).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub budget_s: f64,
    pub days: u32,
    pub skip_cost_s: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            budget_s: 3600.0,
            days: 10,
            skip_cost_s: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorVerdict {
    pub topic: Topic,
    pub matches_interest: bool,
}

impl PredictorVerdict {
    pub fn new(topic: Topic, interest: Topic) -> Self {
        PredictorVerdict {
            topic,
            matches_interest: topic == interest,
        }
    }
}

/// Decides whether a video matches an agent's interest.
///
/// External implementations must only look at the metadata of
/// [`VideoRecord::without_truth`].
pub trait InteractionPredictor: Send + Sync {
    fn predict(&self, video: &VideoRecord, interest: Topic) -> Result<PredictorVerdict, PredictorError>;
}

/// Default predictor: reads the simulator's ground-truth topic and flips the
/// match verdict with probability `error_rate`. The flip is keyed by
/// (seed, video, interest) so it does not depend on call order. Videos
/// without ground truth fall back to the keyword topic scan.
#[derive(Debug, Clone)]
pub struct TruthPredictor {
    pub seed: u64,
    pub error_rate: f64,
    lexicon: Lexicon,
}

impl TruthPredictor {
    pub fn new(seed: u64, error_rate: f64) -> Self {
        TruthPredictor {
            seed,
            error_rate,
            lexicon: Lexicon::default(),
        }
    }
}

impl InteractionPredictor for TruthPredictor {
    fn predict(&self, video: &VideoRecord, interest: Topic) -> Result<PredictorVerdict, PredictorError> {
        let topic = match video.truth {
            Some(t) => t.true_topic,
            None => scan_topic(&crate::classify::ClassifierInputView::from(video), &self.lexicon),
        };
        let flip = derive_unit(self.seed, &["predictor", &video.video_id, interest.as_str()]) < self.error_rate;
        let topic = match (flip, topic == interest) {
            (false, _) => topic,
            (true, true) => Topic::Other,
            (true, false) => interest,
        };
        Ok(PredictorVerdict::new(topic, interest))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedingReport {
    pub evaluated: u32,
    pub engaged: u32,
}

/// Interest seeding: evaluate search results one by one, engaging strongly
/// with matches, until `relevant_target` engagements or `candidate_cap`
/// evaluations, whichever comes first.
pub fn run_seeding(
    service: &dyn FeedService,
    agent: &UserProfile,
    cfg: &SeedingConfig,
    skip_cost_s: f64,
    predictor: &dyn InteractionPredictor,
) -> Result<(SeedingReport, Vec<ExposureRecord>), OrchestratorError> {
    let queries = cfg.queries_for(agent.interest);
    if queries.is_empty() {
        return Err(OrchestratorError::InvalidRequest(format!(
            "no seeding queries for interest {}",
            agent.interest
        )));
    }
    service.open_session(OpenSession {
        profile: agent.clone(),
        session_index: 1,
        phase: Phase::Seeding,
        skip_cost_s,
    })?;
    let mut report = SeedingReport { evaluated: 0, engaged: 0 };
    while report.engaged < cfg.relevant_target && report.evaluated < cfg.candidate_cap {
        let query = &queries[report.evaluated as usize % queries.len()];
        let item = service.next_search_result(&agent.user_id, query, agent.interest)?;
        let verdict = predictor.predict(&item.video, agent.interest)?;
        let engagement = if verdict.matches_interest {
            report.engaged += 1;
            Engagement::strong_interest()
        } else {
            Engagement::skip()
        };
        service.record_engagement(&agent.user_id, &item.video.video_id, engagement)?;
        report.evaluated += 1;
    }
    let log = service.close_session(&agent.user_id)?;
    Ok((report, log))
}

struct AgentRun<'a> {
    profile: &'a UserProfile,
    elapsed_s: f64,
    served: usize,
    active: bool,
}

/// One day of paired collection. Both agents advance in lockstep rounds:
/// neither starts item k+1 before both finished item k. An agent stops once
/// its elapsed time reaches the budget; the item that crosses the budget is
/// still watched and logged.
pub fn run_session(
    service: &dyn FeedService,
    pair: &AgentPair,
    cfg: &SessionConfig,
    day: u32,
    predictor: &dyn InteractionPredictor,
) -> Result<(Vec<ExposureRecord>, Vec<ExposureRecord>), OrchestratorError> {
    if day < 1 || day > cfg.days {
        return Err(OrchestratorError::InvalidRequest(format!(
            "day {day} outside 1..={}",
            cfg.days
        )));
    }
    let mut agents = [&pair.minor, &pair.adult].map(|profile| AgentRun {
        profile,
        elapsed_s: 0.0,
        served: 0,
        active: cfg.budget_s > 0.0,
    });
    for a in &agents {
        service.open_session(OpenSession {
            profile: a.profile.clone(),
            session_index: day,
            phase: Phase::Collection,
            skip_cost_s: cfg.skip_cost_s,
        })?;
    }

    let mut round = 0;
    while agents.iter().any(|a| a.active) {
        round += 1;
        for a in agents.iter_mut().filter(|a| a.active) {
            let item = service.next_feed_item(&a.profile.user_id)?;
            if item.position as usize != round {
                return Err(OrchestratorError::PairDesync {
                    pair_id: pair.pair_id.clone(),
                    round,
                    detail: format!("{} received position {}", a.profile.user_id, item.position),
                });
            }
            let verdict = predictor.predict(&item.video, a.profile.interest)?;
            let (engagement, dwell) = if verdict.matches_interest {
                (Engagement::strong_interest(), item.video.duration_s)
            } else {
                (Engagement::skip(), cfg.skip_cost_s)
            };
            service.record_engagement(&a.profile.user_id, &item.video.video_id, engagement)?;
            a.elapsed_s += dwell;
            a.served += 1;
            if a.elapsed_s >= cfg.budget_s {
                a.active = false;
            }
        }
        let lagging = agents.iter().find(|a| a.active && a.served != round);
        if let Some(a) = lagging {
            return Err(OrchestratorError::PairDesync {
                pair_id: pair.pair_id.clone(),
                round,
                detail: format!("{} served {} items", a.profile.user_id, a.served),
            });
        }
    }

    let minor_log = service.close_session(&pair.minor.user_id)?;
    let adult_log = service.close_session(&pair.adult.user_id)?;
    for (a, log) in agents.iter().zip([&minor_log, &adult_log]) {
        if log.len() != a.served {
            return Err(OrchestratorError::PairDesync {
                pair_id: pair.pair_id.clone(),
                round,
                detail: format!("{} logged {} of {} served items", a.profile.user_id, log.len(), a.served),
            });
        }
    }
    Ok((minor_log, adult_log))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub user_id: String,
    pub session_index: u32,
    pub records: Vec<ExposureRecord>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserTotals {
    pub seeding_evaluated: u32,
    pub seeding_engaged: u32,
    pub sessions: u32,
    pub exposures: u64,
}

/// Everything an audit run produced. Seeding exposures are kept apart and
/// never enter the statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditDataset {
    pub scenario: Scenario,
    pub seeding: BTreeMap<String, (SeedingReport, Vec<ExposureRecord>)>,
    /// Ordered by pair, then day, then minor before adult.
    pub sessions: Vec<SessionLog>,
}

impl AuditDataset {
    pub fn totals(&self) -> BTreeMap<String, UserTotals> {
        let mut out: BTreeMap<String, UserTotals> = BTreeMap::new();
        for (user, (report, _)) in &self.seeding {
            let t = out.entry(user.clone()).or_default();
            t.seeding_evaluated = report.evaluated;
            t.seeding_engaged = report.engaged;
        }
        for log in &self.sessions {
            let t = out.entry(log.user_id.clone()).or_default();
            t.sessions += 1;
            t.exposures += log.records.len() as u64;
        }
        out
    }

    /// All collection-phase exposures, in session order.
    pub fn exposures(&self) -> impl Iterator<Item = &ExposureRecord> {
        self.sessions.iter().flat_map(|s| s.records.iter())
    }
}

fn run_pair(
    service: &dyn FeedService,
    pair: &AgentPair,
    scenario: &Scenario,
    predictor: &dyn InteractionPredictor,
) -> Result<(Vec<(String, SeedingReport, Vec<ExposureRecord>)>, Vec<SessionLog>), OrchestratorError> {
    let mut seeding = Vec::new();
    for agent in [&pair.minor, &pair.adult] {
        let (report, log) = run_seeding(
            service,
            agent,
            &scenario.seeding,
            scenario.session.skip_cost_s,
            predictor,
        )?;
        seeding.push((agent.user_id.clone(), report, log));
    }
    let mut sessions = Vec::new();
    for day in 1..=scenario.session.days {
        let (minor, adult) = run_session(service, pair, &scenario.session, day, predictor)?;
        for (profile, records) in [(&pair.minor, minor), (&pair.adult, adult)] {
            sessions.push(SessionLog {
                user_id: profile.user_id.clone(),
                session_index: day,
                records,
            });
        }
    }
    Ok((seeding, sessions))
}

/// Runs every pair (concurrently) against `service`.
pub fn run_audit_with(
    scenario: &Scenario,
    service: &dyn FeedService,
    predictor: &dyn InteractionPredictor,
) -> Result<AuditDataset, OrchestratorError> {
    scenario.validate()?;
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = scenario
            .pairs
            .iter()
            .map(|pair| s.spawn(move || run_pair(service, pair, scenario, predictor)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("pair worker panicked"))
            .collect()
    });
    let mut dataset = AuditDataset {
        scenario: scenario.clone(),
        seeding: BTreeMap::new(),
        sessions: Vec::new(),
    };
    for result in results {
        let (seeding, sessions) = result?;
        for (user, report, log) in seeding {
            dataset.seeding.insert(user, (report, log));
        }
        dataset.sessions.extend(sessions);
    }
    Ok(dataset)
}

/// Runs the scenario on a fresh in-process simulator with the default
/// predictor.
pub fn run_audit(scenario: &Scenario) -> Result<AuditDataset, OrchestratorError> {
    scenario.validate()?;
    let sim = Simulator::new(scenario.seed, scenario.policy.clone());
    let predictor = TruthPredictor::new(scenario.seed, scenario.seeding.predictor_error_rate);
    run_audit_with(scenario, &sim, &predictor)
}
