//! Domain types shared by the simulator, the agents, the classifier and the
//! statistics engine.
//!
//! Every type here is an immutable value once constructed. The serialized
//! forms are the on-disk record schemas (see [`crate::jsonl`]).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("mismatched pair {pair_id}: {field} differs between minor and adult")]
    MismatchedPair { pair_id: String, field: &'static str },
    #[error("invalid age {age} for {variant} agent")]
    InvalidAge { age: u32, variant: AgeVariant },
    #[error("unknown {kind} label `{value}`")]
    UnknownLabel { kind: &'static str, value: String },
    #[error("incoherent {what}: {reason}")]
    Incoherent { what: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeVariant {
    Minor,
    Adult,
}

impl AgeVariant {
    pub const ALL: [AgeVariant; 2] = [AgeVariant::Minor, AgeVariant::Adult];

    pub fn as_str(self) -> &'static str {
        match self {
            AgeVariant::Minor => "minor",
            AgeVariant::Adult => "adult",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            AgeVariant::Minor => "Minor",
            AgeVariant::Adult => "Adult",
        }
    }
}

impl fmt::Display for AgeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgeVariant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "minor" => Ok(AgeVariant::Minor),
            "adult" => Ok(AgeVariant::Adult),
            other => Err(ModelError::UnknownLabel {
                kind: "age group",
                value: other.to_string(),
            }),
        }
    }
}

/// Age signalled at registration. Minors are 16-17 and adults 20-21; the
/// borderline ages 18-19 are never used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawAgeGroup")]
pub struct AgeGroup {
    variant: AgeVariant,
    age_years: u32,
}

#[derive(Deserialize)]
struct RawAgeGroup {
    variant: AgeVariant,
    age_years: u32,
}

impl TryFrom<RawAgeGroup> for AgeGroup {
    type Error = ModelError;

    fn try_from(raw: RawAgeGroup) -> Result<Self, Self::Error> {
        let group = AgeGroup::from_age(raw.age_years)?;
        if group.variant != raw.variant {
            return Err(ModelError::InvalidAge {
                age: raw.age_years,
                variant: raw.variant,
            });
        }
        Ok(group)
    }
}

impl AgeGroup {
    /// Classifies an age in years. Only 16, 17, 20 and 21 are accepted.
    pub fn from_age(age_years: u32) -> Result<Self, ModelError> {
        let variant = match age_years {
            16 | 17 => AgeVariant::Minor,
            20 | 21 => AgeVariant::Adult,
            _ => {
                let variant = if age_years < 18 {
                    AgeVariant::Minor
                } else {
                    AgeVariant::Adult
                };
                return Err(ModelError::InvalidAge { age: age_years, variant });
            }
        };
        Ok(AgeGroup { variant, age_years })
    }

    pub fn minor(age_years: u32) -> Result<Self, ModelError> {
        Self::expect(age_years, AgeVariant::Minor)
    }

    pub fn adult(age_years: u32) -> Result<Self, ModelError> {
        Self::expect(age_years, AgeVariant::Adult)
    }

    fn expect(age_years: u32, variant: AgeVariant) -> Result<Self, ModelError> {
        match Self::from_age(age_years) {
            Ok(group) if group.variant == variant => Ok(group),
            _ => Err(ModelError::InvalidAge { age: age_years, variant }),
        }
    }

    pub fn variant(&self) -> AgeVariant {
        self.variant
    }

    pub fn age_years(&self) -> u32 {
        self.age_years
    }
}

/// Content and ad topics. `Other` is a classification outcome only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topic {
    Beauty,
    Fitness,
    Gaming,
    Politics,
    Other,
}

impl Topic {
    /// Fixed category order; also the tie-break order of the topic scanner.
    pub const ALL: [Topic; 5] = [
        Topic::Beauty,
        Topic::Fitness,
        Topic::Gaming,
        Topic::Politics,
        Topic::Other,
    ];

    /// Topics a user profile may be seeded with.
    pub const INTERESTS: [Topic; 4] = [Topic::Beauty, Topic::Fitness, Topic::Gaming, Topic::Politics];

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::Beauty => "beauty",
            Topic::Fitness => "fitness",
            Topic::Gaming => "gaming",
            Topic::Politics => "politics",
            Topic::Other => "other",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Topic::Beauty => "Beauty",
            Topic::Fitness => "Fitness",
            Topic::Gaming => "Gaming",
            Topic::Politics => "Politics",
            Topic::Other => "Other",
        }
    }

    pub fn is_interest(self) -> bool {
        self != Topic::Other
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Topic {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Topic::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ModelError::UnknownLabel {
                kind: "topic",
                value: s.to_string(),
            })
    }
}

/// The mutually exclusive ad types, plus `NonAd`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdType {
    Formal,
    Disclosed,
    Undisclosed,
    NonAd,
}

impl AdType {
    pub const ALL: [AdType; 4] = [AdType::Formal, AdType::Disclosed, AdType::Undisclosed, AdType::NonAd];
    pub const ADS: [AdType; 3] = [AdType::Formal, AdType::Disclosed, AdType::Undisclosed];
    /// Creator-driven commercial content (self-labelled or not).
    pub const CREATOR: [AdType; 2] = [AdType::Disclosed, AdType::Undisclosed];

    pub fn as_str(self) -> &'static str {
        match self {
            AdType::Formal => "formal",
            AdType::Disclosed => "disclosed",
            AdType::Undisclosed => "undisclosed",
            AdType::NonAd => "non_ad",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            AdType::Formal => "Formal",
            AdType::Disclosed => "Disclosed",
            AdType::Undisclosed => "Undisclosed",
            AdType::NonAd => "Non Ad",
        }
    }

    pub fn is_ad(self) -> bool {
        self != AdType::NonAd
    }
}

impl fmt::Display for AdType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdType {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AdType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ModelError::UnknownLabel {
                kind: "ad type",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn title(self) -> &'static str {
        match self {
            Gender::Female => "Female",
            Gender::Male => "Male",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub age_group: AgeGroup,
    pub gender: Gender,
    pub interest: Topic,
    pub locale: String,
}

impl UserProfile {
    /// Report label such as `Beauty_Minor`.
    pub fn label(&self) -> String {
        format!("{}_{}", self.interest.title(), self.age_group.variant().title())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentPair {
    pub pair_id: String,
    pub minor: UserProfile,
    pub adult: UserProfile,
}

/// Checks the confound controls of a minor/adult pair and returns it
/// unchanged when they hold.
pub fn validate_pair(pair: AgentPair) -> Result<AgentPair, ModelError> {
    let minor_age = pair.minor.age_group.age_years();
    let adult_age = pair.adult.age_group.age_years();
    AgeGroup::minor(minor_age)?;
    AgeGroup::adult(adult_age)?;
    if pair.minor.age_group.variant() != AgeVariant::Minor {
        return Err(ModelError::InvalidAge { age: minor_age, variant: AgeVariant::Minor });
    }
    if pair.adult.age_group.variant() != AgeVariant::Adult {
        return Err(ModelError::InvalidAge { age: adult_age, variant: AgeVariant::Adult });
    }
    let mismatch = |field| ModelError::MismatchedPair {
        pair_id: pair.pair_id.clone(),
        field,
    };
    if pair.minor.gender != pair.adult.gender {
        return Err(mismatch("gender"));
    }
    if pair.minor.interest != pair.adult.interest {
        return Err(mismatch("interest"));
    }
    if pair.minor.locale != pair.adult.locale {
        return Err(mismatch("locale"));
    }
    if pair.minor.user_id == pair.adult.user_id {
        return Err(mismatch("user_id"));
    }
    if !pair.minor.interest.is_interest() {
        return Err(ModelError::Incoherent {
            what: "profile",
            reason: "`other` is not a valid interest".into(),
        });
    }
    Ok(pair)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlayLabel {
    None,
    Sponsored,
    Ad,
    PaidPartnership,
    PromotionalContent,
}

impl OverlayLabel {
    pub const ALL: [OverlayLabel; 5] = [
        OverlayLabel::None,
        OverlayLabel::Sponsored,
        OverlayLabel::Ad,
        OverlayLabel::PaidPartnership,
        OverlayLabel::PromotionalContent,
    ];

    /// Text the platform renders at the bottom of the frame.
    pub fn display_text(self) -> Option<&'static str> {
        match self {
            OverlayLabel::None => None,
            OverlayLabel::Sponsored => Some("Sponsored"),
            OverlayLabel::Ad => Some("Ad"),
            OverlayLabel::PaidPartnership => Some("Paid partnership"),
            OverlayLabel::PromotionalContent => Some("Promotional content"),
        }
    }

    pub fn from_display_text(text: &str) -> Option<OverlayLabel> {
        let text = text.trim();
        OverlayLabel::ALL
            .into_iter()
            .find(|l| l.display_text().is_some_and(|t| t.eq_ignore_ascii_case(text)))
    }

    pub fn is_formal(self) -> bool {
        matches!(self, OverlayLabel::Sponsored | OverlayLabel::Ad)
    }

    pub fn is_creator_disclosure(self) -> bool {
        matches!(self, OverlayLabel::PaidPartnership | OverlayLabel::PromotionalContent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorKind {
    DiscountCode,
    PromoHashtag,
    BrandMention,
    CallToAction,
    ProductEndorsement,
    Url,
    QrCode,
}

impl IndicatorKind {
    pub const ALL: [IndicatorKind; 7] = [
        IndicatorKind::DiscountCode,
        IndicatorKind::PromoHashtag,
        IndicatorKind::BrandMention,
        IndicatorKind::CallToAction,
        IndicatorKind::ProductEndorsement,
        IndicatorKind::Url,
        IndicatorKind::QrCode,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IndicatorKind::DiscountCode => "discount_code",
            IndicatorKind::PromoHashtag => "promo_hashtag",
            IndicatorKind::BrandMention => "brand_mention",
            IndicatorKind::CallToAction => "call_to_action",
            IndicatorKind::ProductEndorsement => "product_endorsement",
            IndicatorKind::Url => "url",
            IndicatorKind::QrCode => "qr_code",
        }
    }
}

/// Textual summary of one key frame: overlay text at the bottom of the
/// video plus whatever text tokens are visible in the frame.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameDescriptor {
    pub overlay_text: Option<String>,
    pub visible_text: Vec<String>,
}

/// Ground truth attached by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub true_ad_type: AdType,
    pub true_topic: Topic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub author: String,
    pub description: String,
    pub hashtags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    pub duration_s: f64,
    pub overlay_label: OverlayLabel,
    pub commercial_indicators: Vec<IndicatorKind>,
    /// Beginning, middle and end key frames.
    pub frames: [FrameDescriptor; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<GroundTruth>,
}

impl VideoRecord {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(ModelError::Incoherent {
                what: "video",
                reason: format!("duration_s must be positive, got {}", self.duration_s),
            });
        }
        if self.video_id.is_empty() {
            return Err(ModelError::Incoherent {
                what: "video",
                reason: "empty video_id".into(),
            });
        }
        Ok(())
    }

    /// Copy with ground truth removed.
    pub fn without_truth(&self) -> VideoRecord {
        VideoRecord {
            truth: None,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Engagement {
    pub watched_full: bool,
    pub liked: bool,
    pub bookmarked: bool,
    pub skipped: bool,
}

impl Engagement {
    /// Watch to the end, like, bookmark.
    pub fn strong_interest() -> Self {
        Engagement {
            watched_full: true,
            liked: true,
            bookmarked: true,
            skipped: false,
        }
    }

    pub fn skip() -> Self {
        Engagement {
            skipped: true,
            ..Engagement::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        *self == Engagement::default()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: &str| {
            Err(ModelError::Incoherent {
                what: "engagement",
                reason: reason.to_string(),
            })
        };
        if self.skipped == self.watched_full {
            return bad("exactly one of skipped / watched_full must be set");
        }
        if self.liked && !self.watched_full {
            return bad("liked requires watched_full");
        }
        if self.bookmarked && !self.watched_full {
            return bad("bookmarked requires watched_full");
        }
        Ok(())
    }
}

/// One feed item observed by one user in one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureRecord {
    pub user_id: String,
    pub session_index: u32,
    pub position: u32,
    pub sim_time_s: f64,
    pub engaged: Engagement,
    pub video: VideoRecord,
}

impl ExposureRecord {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.session_index < 1 || self.position < 1 {
            return Err(ModelError::Incoherent {
                what: "exposure",
                reason: "session_index and position start at 1".into(),
            });
        }
        if !self.sim_time_s.is_finite() {
            return Err(ModelError::Incoherent {
                what: "exposure",
                reason: "sim_time_s must be finite".into(),
            });
        }
        self.engaged.validate()?;
        self.video.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub video_id: String,
    pub is_ad: bool,
    pub ad_type: AdType,
    pub ad_topic: Option<Topic>,
    pub indicators_found: Vec<IndicatorKind>,
    pub reasoning: String,
}

fn check_label_coherence(what: &'static str, is_ad: bool, ad_type: AdType, ad_topic: Option<Topic>) -> Result<(), ModelError> {
    if is_ad != ad_type.is_ad() || is_ad != ad_topic.is_some() {
        return Err(ModelError::Incoherent {
            what,
            reason: format!(
                "is_ad={is_ad}, ad_type={ad_type}, ad_topic={}",
                ad_topic.map_or("null", Topic::as_str)
            ),
        });
    }
    Ok(())
}

impl ClassificationResult {
    pub fn validate(&self) -> Result<(), ModelError> {
        check_label_coherence("classification", self.is_ad, self.ad_type, self.ad_topic)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub annotator_id: String,
    pub video_id: String,
    pub ad_type: AdType,
    pub ad_topic: Option<Topic>,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<(), ModelError> {
        check_label_coherence("annotation", self.ad_type.is_ad(), self.ad_type, self.ad_topic)
    }
}

/// Anything carrying an (ad type, ad topic) label for a video.
pub trait VideoLabel {
    fn video_id(&self) -> &str;
    fn ad_type(&self) -> AdType;
    fn ad_topic(&self) -> Option<Topic>;
}

impl VideoLabel for ClassificationResult {
    fn video_id(&self) -> &str {
        &self.video_id
    }
    fn ad_type(&self) -> AdType {
        self.ad_type
    }
    fn ad_topic(&self) -> Option<Topic> {
        self.ad_topic
    }
}

impl VideoLabel for AnnotationRecord {
    fn video_id(&self) -> &str {
        &self.video_id
    }
    fn ad_type(&self) -> AdType {
        self.ad_type
    }
    fn ad_topic(&self) -> Option<Topic> {
        self.ad_topic
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn profile(id: &str, age: u32, gender: Gender, interest: Topic) -> UserProfile {
        UserProfile {
            user_id: id.to_string(),
            age_group: AgeGroup::from_age(age).unwrap(),
            gender,
            interest,
            locale: "DE".into(),
        }
    }

    fn pair_with(minor_age: u32, adult_age: u32) -> Result<AgentPair, ModelError> {
        let minor = UserProfile {
            user_id: "m".into(),
            age_group: AgeGroup::from_age(minor_age)?,
            gender: Gender::Female,
            interest: Topic::Beauty,
            locale: "DE".into(),
        };
        let adult = UserProfile {
            user_id: "a".into(),
            age_group: AgeGroup::from_age(adult_age)?,
            gender: Gender::Female,
            interest: Topic::Beauty,
            locale: "DE".into(),
        };
        validate_pair(AgentPair { pair_id: "p".into(), minor, adult })
    }

    #[test]
    fn valid_beauty_pair() {
        let pair = AgentPair {
            pair_id: "beauty".into(),
            minor: profile("bm", 16, Gender::Female, Topic::Beauty),
            adult: profile("ba", 21, Gender::Female, Topic::Beauty),
        };
        assert_eq!(validate_pair(pair.clone()).unwrap(), pair);
    }

    #[test]
    fn gender_mismatch_is_rejected() {
        let pair = AgentPair {
            pair_id: "beauty".into(),
            minor: profile("bm", 16, Gender::Female, Topic::Beauty),
            adult: profile("ba", 21, Gender::Male, Topic::Beauty),
        };
        assert!(matches!(
            validate_pair(pair),
            Err(ModelError::MismatchedPair { field: "gender", .. })
        ));
    }

    #[test]
    fn borderline_age_is_rejected() {
        assert!(matches!(pair_with(18, 21), Err(ModelError::InvalidAge { age: 18, .. })));
        assert!(matches!(AgeGroup::from_age(19), Err(ModelError::InvalidAge { .. })));
    }

    #[test]
    fn age_group_rejects_mislabelled_variant_on_deserialize() {
        let ok: AgeGroup = serde_json::from_str(r#"{"variant":"minor","age_years":17}"#).unwrap();
        assert_eq!(ok.variant(), AgeVariant::Minor);
        assert!(serde_json::from_str::<AgeGroup>(r#"{"variant":"adult","age_years":17}"#).is_err());
        assert!(serde_json::from_str::<AgeGroup>(r#"{"variant":"adult","age_years":18}"#).is_err());
    }

    #[test]
    fn engagement_coherence() {
        assert!(Engagement::strong_interest().validate().is_ok());
        assert!(Engagement::skip().validate().is_ok());
        assert!(Engagement::default().validate().is_err());
        let liked_skip = Engagement { liked: true, ..Engagement::skip() };
        assert!(liked_skip.validate().is_err());
        let both = Engagement { skipped: true, ..Engagement::strong_interest() };
        assert!(both.validate().is_err());
    }

    #[test]
    fn classification_coherence() {
        let mut c = ClassificationResult {
            video_id: "v".into(),
            is_ad: false,
            ad_type: AdType::NonAd,
            ad_topic: None,
            indicators_found: vec![],
            reasoning: String::new(),
        };
        assert!(c.validate().is_ok());
        c.ad_topic = Some(Topic::Beauty);
        assert!(c.validate().is_err());
        c.is_ad = true;
        c.ad_type = AdType::Formal;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn overlay_text_round_trip() {
        for label in OverlayLabel::ALL {
            match label.display_text() {
                Some(text) => assert_eq!(OverlayLabel::from_display_text(text), Some(label)),
                None => assert_eq!(label, OverlayLabel::None),
            }
        }
        assert_eq!(OverlayLabel::from_display_text("paid PARTNERSHIP "), Some(OverlayLabel::PaidPartnership));
    }

    proptest! {
        #[test]
        fn pair_ages_accept_exactly_the_cross_product(minor_age in 0u32..40, adult_age in 0u32..40) {
            let expected = matches!(minor_age, 16 | 17) && matches!(adult_age, 20 | 21);
            prop_assert_eq!(pair_with(minor_age, adult_age).is_ok(), expected);
        }

        #[test]
        fn labels_round_trip(t in 0usize..4, topic in 0usize..5) {
            let ad_type = AdType::ALL[t];
            prop_assert_eq!(ad_type.to_string().parse::<AdType>().unwrap(), ad_type);
            let json = serde_json::to_string(&ad_type).unwrap();
            prop_assert_eq!(json, format!("\"{ad_type}\""));
            let topic = Topic::ALL[topic];
            prop_assert_eq!(topic.to_string().parse::<Topic>().unwrap(), topic);
            let json = serde_json::to_string(&topic).unwrap();
            prop_assert_eq!(json, format!("\"{topic}\""));
        }
    }
}
