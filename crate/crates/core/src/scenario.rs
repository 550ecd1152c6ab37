//! Scenario files: seed, agent pairs, platform policy, session and seeding
//! settings.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::jsonl::to_canonical_pretty;
use crate::model::{validate_pair, AdType, AgeGroup, AgeVariant, AgentPair, Gender, Topic, UserProfile};
use crate::orchestrator::{SeedingConfig, SessionConfig};
use crate::sim::policy::{AdMix, DurationParams, ProfilingPolicy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config error at `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("cannot read scenario {path}: {reason}")]
    Unreadable { path: String, reason: String },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub pairs: Vec<AgentPair>,
    pub policy: ProfilingPolicy,
    pub session: SessionConfig,
    #[serde(default)]
    pub seeding: SeedingConfig,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.pairs.is_empty() {
            return Err(ConfigError::invalid("pairs", "at least one pair is required"));
        }
        let mut ids = HashSet::new();
        for (i, pair) in self.pairs.iter().enumerate() {
            validate_pair(pair.clone()).map_err(|e| ConfigError::invalid(format!("pairs[{i}]"), e.to_string()))?;
            for p in [&pair.minor, &pair.adult] {
                if p.user_id.is_empty() || p.user_id.contains(['/', '\\']) || p.user_id.starts_with('.') {
                    return Err(ConfigError::invalid(
                        format!("pairs[{i}]"),
                        format!("user_id `{}` is not usable as a file name", p.user_id),
                    ));
                }
                if !ids.insert(p.user_id.clone()) {
                    return Err(ConfigError::invalid(
                        format!("pairs[{i}]"),
                        format!("duplicate user_id `{}`", p.user_id),
                    ));
                }
            }
        }
        self.policy
            .validate()
            .map_err(|e| ConfigError::invalid(e.field, e.reason))?;
        let s = &self.session;
        if !(s.budget_s.is_finite() && s.budget_s > 0.0) {
            return Err(ConfigError::invalid("session.budget_s", "must be positive"));
        }
        if s.days < 1 {
            return Err(ConfigError::invalid("session.days", "must be at least 1"));
        }
        if !(s.skip_cost_s.is_finite() && s.skip_cost_s >= 0.0) {
            return Err(ConfigError::invalid("session.skip_cost_s", "must be non-negative"));
        }
        self.seeding
            .validate()
            .map_err(|(field, reason)| ConfigError::invalid(format!("seeding.{field}"), reason))?;
        for pair in &self.pairs {
            let interest = pair.minor.interest;
            if self.seeding.queries_for(interest).is_empty() {
                return Err(ConfigError::invalid(
                    format!("seeding.queries.{interest}"),
                    "no seeding queries for a configured interest",
                ));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Scenario, ConfigError> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| {
            ConfigError::invalid(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Scenario, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Scenario::from_json(&text)
    }

    /// Canonical JSON rendering, used for the stored copy and the hash.
    pub fn to_canonical_json(&self) -> String {
        to_canonical_pretty(self)
    }

    /// SHA-256 of the canonical JSON rendering.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical_json().as_bytes()))
    }

    pub fn users(&self) -> impl Iterator<Item = &UserProfile> {
        self.pairs.iter().flat_map(|p| [&p.minor, &p.adult])
    }
}

pub fn default_policy() -> ProfilingPolicy {
    let mut theta = BTreeMap::new();
    for (ad_type, minor, adult) in [
        (AdType::Formal, 0.0, 0.15),
        (AdType::Disclosed, 0.9, 0.85),
        (AdType::Undisclosed, 0.9, 0.8),
        (AdType::NonAd, 0.6, 0.6),
    ] {
        theta.insert(ad_type, BTreeMap::from([(AgeVariant::Minor, minor), (AgeVariant::Adult, adult)]));
    }
    ProfilingPolicy {
        theta,
        ad_mix: AdMix::ByAge {
            minor: BTreeMap::from([
                (AdType::Formal, 0.01),
                (AdType::Disclosed, 0.02),
                (AdType::Undisclosed, 0.10),
                (AdType::NonAd, 0.87),
            ]),
            adult: BTreeMap::from([
                (AdType::Formal, 0.12),
                (AdType::Disclosed, 0.03),
                (AdType::Undisclosed, 0.08),
                (AdType::NonAd, 0.77),
            ]),
        },
        background_topic_dist: BTreeMap::from([
            (Topic::Beauty, 0.05),
            (Topic::Fitness, 0.05),
            (Topic::Gaming, 0.05),
            (Topic::Politics, 0.05),
            (Topic::Other, 0.80),
        ]),
        disclosure_honesty: 0.5,
        duration_dist: BTreeMap::from([
            (AgeVariant::Minor, DurationParams { mean_s: 50.0, sd_s: 20.0 }),
            (AgeVariant::Adult, DurationParams { mean_s: 35.0, sd_s: 15.0 }),
        ]),
        search_precision: 0.8,
    }
}

fn profile(user_id: &str, age: u32, gender: Gender, interest: Topic) -> UserProfile {
    UserProfile {
        user_id: user_id.to_string(),
        age_group: AgeGroup::from_age(age).expect("valid default ages"),
        gender,
        interest,
        locale: "DE".to_string(),
    }
}

/// Three pairs (beauty, fitness, gaming) over ten one-hour sessions.
pub fn default_scenario() -> Scenario {
    let pair = |interest: Topic, gender: Gender, minor_age: u32, adult_age: u32| {
        let name = interest.as_str();
        AgentPair {
            pair_id: name.to_string(),
            minor: profile(&format!("{name}_minor"), minor_age, gender, interest),
            adult: profile(&format!("{name}_adult"), adult_age, gender, interest),
        }
    };
    Scenario {
        seed: 20251201,
        pairs: vec![
            pair(Topic::Beauty, Gender::Female, 16, 21),
            pair(Topic::Fitness, Gender::Male, 17, 20),
            pair(Topic::Gaming, Gender::Female, 16, 21),
        ],
        policy: default_policy(),
        session: SessionConfig::default(),
        seeding: SeedingConfig::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_is_valid_and_round_trips() {
        let s = default_scenario();
        s.validate().unwrap();
        let back = Scenario::from_json(&s.to_canonical_json()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.config_hash(), s.config_hash());
    }

    #[test]
    fn errors_carry_field_paths() {
        let mut s = default_scenario();
        s.session.days = 0;
        assert!(matches!(s.validate(), Err(ConfigError::Invalid { field, .. }) if field == "session.days"));

        let mut s = default_scenario();
        s.pairs[1].adult.user_id = s.pairs[0].minor.user_id.clone();
        assert!(matches!(s.validate(), Err(ConfigError::Invalid { field, .. }) if field == "pairs[1]"));

        let mut s = default_scenario();
        s.pairs[0].adult.gender = Gender::Male;
        assert!(matches!(s.validate(), Err(ConfigError::Invalid { field, .. }) if field == "pairs[0]"));

        let mut s = default_scenario();
        s.policy.disclosure_honesty = -0.1;
        assert!(
            matches!(s.validate(), Err(ConfigError::Invalid { field, .. }) if field == "policy.disclosure_honesty")
        );
    }

    #[test]
    fn seeding_section_is_optional() {
        let s = default_scenario();
        let mut v = serde_json::to_value(&s).unwrap();
        v.as_object_mut().unwrap().remove("seeding");
        let back: Scenario = serde_json::from_value(v).unwrap();
        assert_eq!(back.seeding, SeedingConfig::default());
    }

    #[test]
    fn malformed_json_is_a_config_error() {
        assert!(matches!(Scenario::from_json("{\"seed\": 1"), Err(ConfigError::Invalid { .. })));
    }
}
