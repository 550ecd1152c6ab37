//! Profiling statistics and validation analytics over classified exposure
//! logs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::model::{AdType, AgeVariant, ClassificationResult, ExposureRecord, Topic, UserProfile, VideoLabel};
use crate::rng::derive_rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no classification for video {video_id} seen by {user_id}")]
    JoinFailure { user_id: String, video_id: String },
    #[error("exposure for unknown user {0}")]
    UnknownUser(String),
    #[error("no same-age users with a different interest than {0}")]
    NoBaselineUsers(String),
    #[error("invalid counts x1={x1} n1={n1} x2={x2} n2={n2}")]
    InvalidCounts { x1: u64, n1: u64, x2: u64, n2: u64 },
    #[error("the two label sets share no video ids")]
    EmptyIntersection,
}

/// A proportion kept as exact integer counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "RawRate", into = "RawRate")]
pub struct Rate {
    pub numerator: u64,
    pub denominator: u64,
}

#[derive(Serialize, Deserialize)]
struct RawRate {
    numerator: u64,
    denominator: u64,
    #[serde(default)]
    value: f64,
    #[serde(default)]
    defined: bool,
}

impl From<RawRate> for Rate {
    fn from(r: RawRate) -> Self {
        Rate::new(r.numerator, r.denominator)
    }
}

impl From<Rate> for RawRate {
    fn from(r: Rate) -> Self {
        RawRate {
            numerator: r.numerator,
            denominator: r.denominator,
            value: r.value(),
            defined: r.defined(),
        }
    }
}

impl Rate {
    pub fn new(numerator: u64, denominator: u64) -> Rate {
        assert!(numerator <= denominator, "rate {numerator}/{denominator} exceeds 1");
        Rate { numerator, denominator }
    }

    pub fn defined(&self) -> bool {
        self.denominator > 0
    }

    /// Zero when the denominator is zero.
    pub fn value(&self) -> f64 {
        if self.denominator == 0 {
            0.0
        } else {
            self.numerator as f64 / self.denominator as f64
        }
    }

    pub fn percent(&self) -> f64 {
        100.0 * self.value()
    }
}

/// "19.27% (58/301)"; an empty rate shows as "0.00% (0/0)".
impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}% ({}/{})", self.percent(), self.numerator, self.denominator)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stars {
    None,
    One,
    Two,
    Three,
}

impl Stars {
    pub fn from_p(p: f64) -> Stars {
        if p < 0.001 {
            Stars::Three
        } else if p < 0.01 {
            Stars::Two
        } else if p < 0.05 {
            Stars::One
        } else {
            Stars::None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stars::None => "",
            Stars::One => "*",
            Stars::Two => "**",
            Stars::Three => "***",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub z: f64,
    pub p_value: f64,
    pub stars: Stars,
}

/// Two-sided pooled two-proportion z-test.
pub fn two_proportion_z(x1: u64, n1: u64, x2: u64, n2: u64) -> Result<ZTest, StatsError> {
    if n1 == 0 || n2 == 0 || x1 > n1 || x2 > n2 {
        return Err(StatsError::InvalidCounts { x1, n1, x2, n2 });
    }
    let (x1f, n1f, x2f, n2f) = (x1 as f64, n1 as f64, x2 as f64, n2 as f64);
    let pooled = (x1f + x2f) / (n1f + n2f);
    if x1 + x2 == 0 || x1 + x2 == n1 + n2 {
        return Ok(ZTest { z: 0.0, p_value: 1.0, stars: Stars::None });
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let z = (x1f / n1f - x2f / n2f) / se;
    let p_value = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    Ok(ZTest { z, p_value, stars: Stars::from_p(p_value) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilingResult {
    pub personalization: Rate,
    pub baseline: Rate,
    pub delta_pp: f64,
    pub z: f64,
    pub p_value: f64,
    pub stars: Stars,
}

/// Percentage-point difference plus the significance test. The test is
/// skipped (p = 1) when either side has no observations.
pub fn profiling_effect(personalization: Rate, baseline: Rate) -> ProfilingResult {
    let delta_pp = 100.0 * (personalization.value() - baseline.value());
    let test = two_proportion_z(
        personalization.numerator,
        personalization.denominator,
        baseline.numerator,
        baseline.denominator,
    )
    .unwrap_or(ZTest { z: 0.0, p_value: 1.0, stars: Stars::None });
    ProfilingResult {
        personalization,
        baseline,
        delta_pp,
        z: test.z,
        p_value: test.p_value,
        stars: test.stars,
    }
}

/// One exposure joined with its classification.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledItem {
    pub video_id: String,
    pub duration_s: f64,
    pub ad_type: AdType,
    pub ad_topic: Option<Topic>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserLabels {
    pub profile: UserProfile,
    pub items: Vec<LabeledItem>,
}

impl UserLabels {
    pub fn ads_of<'a>(&'a self, types: &'a [AdType]) -> impl Iterator<Item = &'a LabeledItem> + 'a {
        self.items.iter().filter(move |i| types.contains(&i.ad_type))
    }

    pub fn count(&self, ad_type: AdType) -> u64 {
        self.items.iter().filter(|i| i.ad_type == ad_type).count() as u64
    }

    pub fn count_topic(&self, ad_type: AdType, topic: Topic) -> u64 {
        self.items
            .iter()
            .filter(|i| i.ad_type == ad_type && i.ad_topic == Some(topic))
            .count() as u64
    }

    pub fn mean_duration(&self) -> Option<f64> {
        if self.items.is_empty() {
            None
        } else {
            Some(self.items.iter().map(|i| i.duration_s).sum::<f64>() / self.items.len() as f64)
        }
    }
}

/// Exposures of every user joined with classifications, in profile order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDataset {
    pub users: Vec<UserLabels>,
}

impl LabeledDataset {
    pub fn join<'a>(
        profiles: impl IntoIterator<Item = &'a UserProfile>,
        exposures: impl IntoIterator<Item = &'a ExposureRecord>,
        classifications: &[ClassificationResult],
    ) -> Result<LabeledDataset, StatsError> {
        let by_id: HashMap<&str, &ClassificationResult> =
            classifications.iter().map(|c| (c.video_id.as_str(), c)).collect();
        let mut users: Vec<UserLabels> = profiles
            .into_iter()
            .map(|p| UserLabels { profile: p.clone(), items: Vec::new() })
            .collect();
        let index: HashMap<String, usize> = users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.profile.user_id.clone(), i))
            .collect();
        for e in exposures {
            let &slot = index
                .get(&e.user_id)
                .ok_or_else(|| StatsError::UnknownUser(e.user_id.clone()))?;
            let c = by_id.get(e.video.video_id.as_str()).ok_or_else(|| StatsError::JoinFailure {
                user_id: e.user_id.clone(),
                video_id: e.video.video_id.clone(),
            })?;
            users[slot].items.push(LabeledItem {
                video_id: e.video.video_id.clone(),
                duration_s: e.video.duration_s,
                ad_type: c.ad_type,
                ad_topic: c.ad_topic,
            });
        }
        Ok(LabeledDataset { users })
    }

    pub fn user(&self, user_id: &str) -> Option<&UserLabels> {
        self.users.iter().find(|u| u.profile.user_id == user_id)
    }
}

/// Share of a user's ads of the given types whose topic is `interest`.
pub fn personalization_rate(user: &UserLabels, interest: Topic, types: &[AdType]) -> Rate {
    let (mut hit, mut total) = (0, 0);
    for item in user.ads_of(types) {
        total += 1;
        if item.ad_topic == Some(interest) {
            hit += 1;
        }
    }
    Rate::new(hit, total)
}

/// Share of `interest`-topic ads among the pooled ads of same-age users who
/// hold a different interest.
pub fn baseline_rate(dataset: &LabeledDataset, user: &UserProfile, types: &[AdType]) -> Result<Rate, StatsError> {
    let peers: Vec<&UserLabels> = dataset
        .users
        .iter()
        .filter(|u| u.profile.age_group.variant() == user.age_group.variant() && u.profile.interest != user.interest)
        .collect();
    if peers.is_empty() {
        return Err(StatsError::NoBaselineUsers(user.user_id.clone()));
    }
    let (mut hit, mut total) = (0, 0);
    for item in peers.iter().flat_map(|u| u.ads_of(types)) {
        total += 1;
        if item.ad_topic == Some(user.interest) {
            hit += 1;
        }
    }
    Ok(Rate::new(hit, total))
}

/// Personalization vs. baseline for one user.
pub fn user_profiling(dataset: &LabeledDataset, user: &UserLabels, types: &[AdType]) -> Result<ProfilingResult, StatsError> {
    let pers = personalization_rate(user, user.profile.interest, types);
    let base = baseline_rate(dataset, &user.profile, types)?;
    Ok(profiling_effect(pers, base))
}

/// Disclosed ads as a share of all creator-driven ads.
pub fn disclosure_rate(user: &UserLabels) -> Rate {
    let disclosed = user.count(AdType::Disclosed);
    Rate::new(disclosed, disclosed + user.count(AdType::Undisclosed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicMatrix {
    /// Interest → ad topic → count.
    pub counts: BTreeMap<Topic, BTreeMap<Topic, u64>>,
    pub diagonal_share: Rate,
}

/// Ad-topic distribution per interest for one age group.
pub fn topic_matrix(dataset: &LabeledDataset, variant: AgeVariant, types: &[AdType]) -> TopicMatrix {
    let mut counts: BTreeMap<Topic, BTreeMap<Topic, u64>> = BTreeMap::new();
    for u in dataset.users.iter().filter(|u| u.profile.age_group.variant() == variant) {
        let row = counts
            .entry(u.profile.interest)
            .or_insert_with(|| Topic::ALL.into_iter().map(|t| (t, 0)).collect());
        for item in u.ads_of(types) {
            if let Some(t) = item.ad_topic {
                *row.entry(t).or_default() += 1;
            }
        }
    }
    let total = counts.values().flat_map(|r| r.values()).sum();
    let diagonal = counts.iter().map(|(i, r)| r.get(i).copied().unwrap_or(0)).sum();
    TopicMatrix {
        counts,
        diagonal_share: Rate::new(diagonal, total),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCell {
    pub user_id: String,
    pub ad_type: AdType,
    pub cell_size: usize,
    pub video_ids: Vec<String>,
}

/// Draws up to `per_cell` distinct videos for every (user, ad type) cell,
/// uniformly without replacement. Each cell has its own seeded stream, so a
/// cell's draw does not depend on the rest of the dataset.
pub fn stratified_sample(dataset: &LabeledDataset, per_cell: usize, seed: u64) -> Vec<SampleCell> {
    let mut out = Vec::new();
    for u in &dataset.users {
        for ad_type in AdType::ALL {
            let ids: BTreeSet<&str> = u
                .items
                .iter()
                .filter(|i| i.ad_type == ad_type)
                .map(|i| i.video_id.as_str())
                .collect();
            let ids: Vec<&str> = ids.into_iter().collect();
            let mut rng = derive_rng(seed, &["sample", &u.profile.user_id, ad_type.as_str()]);
            let mut picked: Vec<String> = ids
                .choose_multiple(&mut rng, per_cell.min(ids.len()))
                .map(|s| s.to_string())
                .collect();
            picked.sort();
            out.push(SampleCell {
                user_id: u.profile.user_id.clone(),
                ad_type,
                cell_size: ids.len(),
                video_ids: picked,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelField {
    AdType,
    AdTopic,
}

impl LabelField {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelField::AdType => "ad_type",
            LabelField::AdTopic => "ad_topic",
        }
    }

    fn value<L: VideoLabel>(self, label: &L) -> &'static str {
        match self {
            LabelField::AdType => label.ad_type().as_str(),
            LabelField::AdTopic => label.ad_topic().map_or("none", Topic::as_str),
        }
    }

    fn labels(self) -> Vec<&'static str> {
        match self {
            LabelField::AdType => AdType::ALL.iter().map(|t| t.as_str()).collect(),
            LabelField::AdTopic => Topic::ALL.iter().map(|t| t.as_str()).chain(["none"]).collect(),
        }
    }
}

/// Items compared by [`agreement`] and [`confusion_matrix`]: the shared
/// video ids, restricted to the reference's ads for the topic field.
fn compared_pairs<'a, R: VideoLabel, P: VideoLabel>(
    reference: &'a [R],
    predicted: &'a [P],
    field: LabelField,
) -> Result<(Vec<(&'a R, &'a P)>, Coverage), StatsError> {
    let pred: BTreeMap<&str, &P> = predicted.iter().map(|p| (p.video_id(), p)).collect();
    let refs: BTreeMap<&str, &R> = reference.iter().map(|r| (r.video_id(), r)).collect();
    let shared: Vec<(&R, &P)> = refs
        .iter()
        .filter_map(|(id, r)| pred.get(id).map(|p| (*r, *p)))
        .collect();
    if shared.is_empty() {
        return Err(StatsError::EmptyIntersection);
    }
    let coverage = Coverage {
        shared: shared.len(),
        only_reference: refs.len() - shared.len(),
        only_predicted: pred.len() - shared.len(),
    };
    let pairs = shared
        .into_iter()
        .filter(|(r, _)| field == LabelField::AdType || r.ad_type().is_ad())
        .collect();
    Ok((pairs, coverage))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub shared: usize,
    pub only_reference: usize,
    pub only_predicted: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub field: LabelField,
    pub rate: Rate,
    pub coverage: Coverage,
}

/// Share of shared videos on which both label sets agree. Topic agreement
/// is measured over the videos the reference labels as ads.
pub fn agreement<R: VideoLabel, P: VideoLabel>(reference: &[R], predicted: &[P], field: LabelField) -> Result<Agreement, StatsError> {
    let (pairs, coverage) = compared_pairs(reference, predicted, field)?;
    let equal = pairs.iter().filter(|(r, p)| field.value(*r) == field.value(*p)).count() as u64;
    Ok(Agreement {
        field,
        rate: Rate::new(equal, pairs.len() as u64),
        coverage,
    })
}

/// Rows are reference labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub field: LabelField,
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn cell(&self, reference: &str, predicted: &str) -> u64 {
        let r = self.labels.iter().position(|l| l == reference);
        let p = self.labels.iter().position(|l| l == predicted);
        match (r, p) {
            (Some(r), Some(p)) => self.counts[r][p],
            _ => 0,
        }
    }

    pub fn accuracy(&self) -> Rate {
        let total = self.counts.iter().flatten().sum();
        let diag = (0..self.labels.len()).map(|i| self.counts[i][i]).sum();
        Rate::new(diag, total)
    }

    pub fn row_total(&self, reference: &str) -> u64 {
        self.labels
            .iter()
            .position(|l| l == reference)
            .map_or(0, |r| self.counts[r].iter().sum())
    }
}

pub fn confusion_matrix<R: VideoLabel, P: VideoLabel>(
    reference: &[R],
    predicted: &[P],
    field: LabelField,
) -> Result<ConfusionMatrix, StatsError> {
    let (pairs, _) = compared_pairs(reference, predicted, field)?;
    let labels = field.labels();
    let pos = |l: &str| labels.iter().position(|x| *x == l).expect("known label");
    let mut counts = vec![vec![0u64; labels.len()]; labels.len()];
    for (r, p) in pairs {
        counts[pos(field.value(r))][pos(field.value(p))] += 1;
    }
    Ok(ConfusionMatrix {
        field,
        labels: labels.into_iter().map(String::from).collect(),
        counts,
    })
}
