//! Ground-truth profiling policy of the simulated platform.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AdType, AgeVariant, Topic};

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid policy field `{field}`: {reason}")]
pub struct PolicyError {
    pub field: String,
    pub reason: String,
}

fn policy_err(field: impl Into<String>, reason: impl Into<String>) -> PolicyError {
    PolicyError {
        field: field.into(),
        reason: reason.into(),
    }
}

pub type TypeDist = BTreeMap<AdType, f64>;

/// Ad-type mix, either shared by both age groups or given per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AdMix {
    Shared(TypeDist),
    ByAge { minor: TypeDist, adult: TypeDist },
}

impl AdMix {
    pub fn for_age(&self, age: AgeVariant) -> &TypeDist {
        match self {
            AdMix::Shared(d) => d,
            AdMix::ByAge { minor, adult } => match age {
                AgeVariant::Minor => minor,
                AgeVariant::Adult => adult,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationParams {
    pub mean_s: f64,
    pub sd_s: f64,
}

fn default_search_precision() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilingPolicy {
    /// Probability that a video of the given type served to the given age
    /// group has its topic forced to the viewer's interest. Missing entries
    /// are 0.
    pub theta: BTreeMap<AdType, BTreeMap<AgeVariant, f64>>,
    pub ad_mix: AdMix,
    pub background_topic_dist: BTreeMap<Topic, f64>,
    /// Probability that content drawn as disclosed keeps its disclosure
    /// overlay; otherwise it is served unlabeled and is undisclosed.
    pub disclosure_honesty: f64,
    pub duration_dist: BTreeMap<AgeVariant, DurationParams>,
    /// Probability that a search result matches the queried topic.
    #[serde(default = "default_search_precision")]
    pub search_precision: f64,
}

fn check_unit(field: &str, v: f64) -> Result<(), PolicyError> {
    if !(0.0..=1.0).contains(&v) || v.is_nan() {
        return Err(policy_err(field, format!("{v} is outside [0, 1]")));
    }
    Ok(())
}

fn check_dist<K: Ord + std::fmt::Display>(field: &str, dist: &BTreeMap<K, f64>) -> Result<(), PolicyError> {
    for (k, v) in dist {
        check_unit(&format!("{field}.{k}"), *v)?;
    }
    let total: f64 = dist.values().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(policy_err(field, format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

impl ProfilingPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        for (ad_type, by_age) in &self.theta {
            for (age, v) in by_age {
                check_unit(&format!("policy.theta.{ad_type}.{age}"), *v)?;
            }
        }
        match &self.ad_mix {
            AdMix::Shared(d) => check_dist("policy.ad_mix", d)?,
            AdMix::ByAge { minor, adult } => {
                check_dist("policy.ad_mix.minor", minor)?;
                check_dist("policy.ad_mix.adult", adult)?;
            }
        }
        check_dist("policy.background_topic_dist", &self.background_topic_dist)?;
        check_unit("policy.disclosure_honesty", self.disclosure_honesty)?;
        check_unit("policy.search_precision", self.search_precision)?;
        for age in AgeVariant::ALL {
            let field = format!("policy.duration_dist.{age}");
            let d = self
                .duration_dist
                .get(&age)
                .ok_or_else(|| policy_err(&field, "missing"))?;
            if !(d.mean_s.is_finite() && d.mean_s > 0.0) {
                return Err(policy_err(format!("{field}.mean_s"), "must be positive"));
            }
            if !(d.sd_s.is_finite() && d.sd_s >= 0.0) {
                return Err(policy_err(format!("{field}.sd_s"), "must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn theta(&self, ad_type: AdType, age: AgeVariant) -> f64 {
        self.theta
            .get(&ad_type)
            .and_then(|m| m.get(&age))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn set_theta(&mut self, ad_type: AdType, age: AgeVariant, value: f64) {
        self.theta.entry(ad_type).or_default().insert(age, value);
    }

    pub fn background(&self, topic: Topic) -> f64 {
        self.background_topic_dist.get(&topic).copied().unwrap_or(0.0)
    }

    pub fn duration(&self, age: AgeVariant) -> DurationParams {
        self.duration_dist[&age]
    }

    /// Probability of a served video having each ground-truth type, after
    /// dishonest disclosures have been turned into undisclosed content.
    pub fn realized_type_share(&self, age: AgeVariant, ad_type: AdType) -> f64 {
        let mix = self.ad_mix.for_age(age);
        let p = |t| mix.get(&t).copied().unwrap_or(0.0);
        match ad_type {
            AdType::Disclosed => p(AdType::Disclosed) * self.disclosure_honesty,
            AdType::Undisclosed => p(AdType::Undisclosed) + p(AdType::Disclosed) * (1.0 - self.disclosure_honesty),
            other => p(other),
        }
    }

    /// Closed-form probability that a ground-truth ad of `ad_type` served to
    /// `age` has the viewer's `interest` as its topic.
    pub fn expected_topic_match(&self, ad_type: AdType, age: AgeVariant, interest: Topic) -> f64 {
        let theta = self.theta(ad_type, age);
        theta + (1.0 - theta) * self.background(interest)
    }

    /// Closed-form (personalization, baseline, delta) for a user with
    /// `interest` in `age`, over ads of `types`, assuming the baseline users
    /// share the age group and hold other interests. Delta is a fraction,
    /// not percentage points.
    pub fn expected_profiling(&self, age: AgeVariant, types: &[AdType], interest: Topic) -> (f64, f64, f64) {
        let weights: Vec<(AdType, f64)> = types
            .iter()
            .map(|t| (*t, self.realized_type_share(age, *t)))
            .collect();
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        if total == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let bg = self.background(interest);
        let mut pers = 0.0;
        let mut base = 0.0;
        for (t, w) in weights {
            let theta = self.theta(t, age);
            pers += w / total * (theta + (1.0 - theta) * bg);
            base += w / total * (1.0 - theta) * bg;
        }
        (pers, base, pers - base)
    }
}
