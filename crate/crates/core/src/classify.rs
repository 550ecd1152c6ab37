//! Post-hoc ad classification.
//!
//! Each video gets exactly one [`AdType`] by strict priority: a formal
//! overlay ("Sponsored"/"Ad") wins over a creator disclosure overlay ("Paid
//! partnership"/"Promotional content"), which wins over commercial
//! indicators found in the content; anything else is not an ad.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;
use thiserror::Error;

use crate::lexicon::{count_phrase, words, Lexicon};
use crate::model::{
    AdType, ClassificationResult, ExposureRecord, FrameDescriptor, IndicatorKind, OverlayLabel, Topic, VideoRecord,
};
use crate::rng::derive_unit;

/// What a classifier may see of a video: everything except ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierInputView {
    pub video_id: String,
    pub author: String,
    pub description: String,
    pub hashtags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    pub duration_s: f64,
    pub overlay_label: OverlayLabel,
    pub commercial_indicators: Vec<IndicatorKind>,
    pub frames: [FrameDescriptor; 3],
}

impl From<&VideoRecord> for ClassifierInputView {
    fn from(v: &VideoRecord) -> Self {
        ClassifierInputView {
            video_id: v.video_id.clone(),
            author: v.author.clone(),
            description: v.description.clone(),
            hashtags: v.hashtags.clone(),
            transcript: v.transcript.clone(),
            duration_s: v.duration_s,
            overlay_label: v.overlay_label,
            commercial_indicators: v.commercial_indicators.clone(),
            frames: v.frames.clone(),
        }
    }
}

impl ClassifierInputView {
    /// Free text scanned for indicators and topics. The author handle and
    /// overlay texts are not part of it.
    fn texts(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.description.as_str())
            .chain(self.transcript.as_deref())
            .chain(self.frames.iter().flat_map(|f| f.visible_text.iter().map(String::as_str)))
    }
}

pub trait Classifier: Send + Sync {
    fn classify(&self, view: &ClassifierInputView) -> ClassificationResult;
}

static URL_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bhttps?://\S+|\bwww\.\S+").unwrap());
static MENTION_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:^|[^\w@])@[A-Za-z0-9_.]+").unwrap());
static HASHTAG_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#(\w+)").unwrap());

fn looks_like_code(token: &str) -> bool {
    token.len() >= 3
        && token.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit())
        && token.chars().any(|c| c.is_ascii_uppercase())
}

fn is_code_context(token: &str) -> bool {
    token.eq_ignore_ascii_case("code") || token.contains('%')
}

/// An uppercase alphanumeric token next to "code" or a percentage
/// ("20% off SAVE20" counts: one filler word may sit in between).
fn has_discount_code(text: &str) -> bool {
    let tokens: Vec<&str> = text
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| !(c.is_alphanumeric() || c == '%')))
        .filter(|t| !t.is_empty())
        .collect();
    tokens.iter().enumerate().any(|(i, t)| {
        let near = |j: usize| tokens.get(j).is_some_and(|n| is_code_context(n));
        let near_pct = |j: usize| tokens.get(j).is_some_and(|n| n.contains('%'));
        looks_like_code(t)
            && ((i > 0 && near(i - 1)) || near(i + 1) || (i > 1 && near_pct(i - 2)) || near_pct(i + 2))
    })
}

fn normalized_tag(tag: &str) -> String {
    tag.trim().trim_start_matches('#').to_lowercase()
}

/// Pattern scan for commercial indicators over description, hashtags,
/// transcript and frame text. Returns each kind found once, in enum order.
pub fn scan_indicators(view: &ClassifierInputView, lexicon: &Lexicon) -> Vec<IndicatorKind> {
    let mut found = BTreeSet::new();
    let is_promo = |tag: &str| lexicon.promo_hashtags.iter().any(|p| normalized_tag(p) == normalized_tag(tag));
    if view.hashtags.iter().any(|t| is_promo(t)) {
        found.insert(IndicatorKind::PromoHashtag);
    }
    let mut all_words = Vec::new();
    for text in view.texts() {
        if HASHTAG_RE.captures_iter(text).any(|c| is_promo(&c[1])) {
            found.insert(IndicatorKind::PromoHashtag);
        }
        if has_discount_code(text) {
            found.insert(IndicatorKind::DiscountCode);
        }
        if URL_RE.is_match(text) {
            found.insert(IndicatorKind::Url);
        }
        if MENTION_RE.is_match(text) {
            found.insert(IndicatorKind::BrandMention);
        }
        all_words.extend(words(text));
    }
    let any_phrase = |phrases: &[String]| phrases.iter().any(|p| count_phrase(&all_words, p) > 0);
    if any_phrase(&lexicon.cta_phrases) {
        found.insert(IndicatorKind::CallToAction);
    }
    if any_phrase(&lexicon.brands) {
        found.insert(IndicatorKind::BrandMention);
    }
    if any_phrase(&lexicon.endorsement_phrases) {
        found.insert(IndicatorKind::ProductEndorsement);
    }
    if any_phrase(&lexicon.qr_tokens) {
        found.insert(IndicatorKind::QrCode);
    }
    found.into_iter().collect()
}

/// Keyword-count topic. Ties go to the earlier category
/// (beauty, fitness, gaming, politics); no hits means `Other`.
pub fn scan_topic(view: &ClassifierInputView, lexicon: &Lexicon) -> Topic {
    let mut all_words: Vec<String> = Vec::new();
    for text in view.texts() {
        all_words.extend(words(text));
    }
    for tag in &view.hashtags {
        all_words.extend(words(tag));
    }
    let mut best = (0usize, Topic::Other);
    for topic in Topic::INTERESTS {
        let hits: usize = lexicon.keywords(topic).iter().map(|k| count_phrase(&all_words, k)).sum();
        if hits > best.0 {
            best = (hits, topic);
        }
    }
    best.1
}

/// Overlay labels visible on the video: the metadata label plus any label
/// text rendered in the frames.
pub fn detect_overlays(view: &ClassifierInputView) -> BTreeSet<OverlayLabel> {
    let mut labels: BTreeSet<OverlayLabel> = view
        .frames
        .iter()
        .filter_map(|f| f.overlay_text.as_deref().and_then(OverlayLabel::from_display_text))
        .collect();
    labels.insert(view.overlay_label);
    labels.remove(&OverlayLabel::None);
    labels
}

/// Deterministic rule classifier.
#[derive(Debug, Clone, Default)]
pub struct RuleClassifier {
    pub lexicon: Lexicon,
}

impl RuleClassifier {
    pub fn new(lexicon: Lexicon) -> Self {
        RuleClassifier { lexicon }
    }
}

impl Classifier for RuleClassifier {
    fn classify(&self, view: &ClassifierInputView) -> ClassificationResult {
        let overlays = detect_overlays(view);
        let mut indicators: BTreeSet<IndicatorKind> = scan_indicators(view, &self.lexicon).into_iter().collect();
        indicators.extend(view.commercial_indicators.iter().copied());
        let indicators: Vec<IndicatorKind> = indicators.into_iter().collect();

        let formal = overlays.iter().find(|l| l.is_formal());
        let creator = overlays.iter().find(|l| l.is_creator_disclosure());
        let (ad_type, mut reasoning) = if let Some(l) = formal {
            (AdType::Formal, format!("formal overlay label '{}'", l.display_text().unwrap_or_default()))
        } else if let Some(l) = creator {
            (AdType::Disclosed, format!("disclosure overlay label '{}'", l.display_text().unwrap_or_default()))
        } else if !indicators.is_empty() {
            let names: Vec<&str> = indicators.iter().map(|k| k.as_str()).collect();
            (
                AdType::Undisclosed,
                format!("no disclosure label but commercial indicators: {}", names.join(", ")),
            )
        } else {
            (AdType::NonAd, "no overlay label and no commercial indicators".to_string())
        };
        let ad_topic = ad_type.is_ad().then(|| scan_topic(view, &self.lexicon));
        if let Some(t) = ad_topic {
            reasoning.push_str(&format!("; topic {t}"));
        }
        ClassificationResult {
            video_id: view.video_id.clone(),
            is_ad: ad_type.is_ad(),
            ad_type,
            ad_topic,
            indicators_found: indicators,
            reasoning,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("noise rate `{field}` = {value} is outside [0, 1]")]
    InvalidNoise { field: &'static str, value: f64 },
    #[error("external response: {0}")]
    ExternalResponse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub type_error_rate: f64,
    pub topic_error_rate: f64,
    pub seed: u64,
}

/// Seeded label noise around another classifier. Each video's corruption
/// is fixed by (seed, video id), so results are order-independent.
pub struct NoisyClassifier<C> {
    inner: C,
    spec: NoiseSpec,
    lexicon: Lexicon,
}

pub fn wrap_with_noise<C: Classifier>(inner: C, spec: NoiseSpec) -> Result<NoisyClassifier<C>, ClassifyError> {
    for (field, value) in [
        ("type_error_rate", spec.type_error_rate),
        ("topic_error_rate", spec.topic_error_rate),
    ] {
        if !(0.0..=1.0).contains(&value) {
            return Err(ClassifyError::InvalidNoise { field, value });
        }
    }
    Ok(NoisyClassifier {
        inner,
        spec,
        lexicon: Lexicon::default(),
    })
}

fn pick_other<T: Copy + PartialEq>(all: &[T], current: T, u: f64) -> T {
    let others: Vec<T> = all.iter().copied().filter(|x| *x != current).collect();
    others[((u * others.len() as f64) as usize).min(others.len() - 1)]
}

impl<C: Classifier> Classifier for NoisyClassifier<C> {
    fn classify(&self, view: &ClassifierInputView) -> ClassificationResult {
        let mut r = self.inner.classify(view);
        let id = view.video_id.as_str();
        let seed = self.spec.seed;
        if derive_unit(seed, &["noise", "type", id]) < self.spec.type_error_rate {
            let u = derive_unit(seed, &["noise", "type-pick", id]);
            r.ad_type = pick_other(&AdType::ALL, r.ad_type, u);
            r.is_ad = r.ad_type.is_ad();
            r.ad_topic = if r.is_ad {
                r.ad_topic.or_else(|| Some(scan_topic(view, &self.lexicon)))
            } else {
                None
            };
            r.reasoning.push_str("; type perturbed");
        }
        if let Some(topic) = r.ad_topic {
            if derive_unit(seed, &["noise", "topic", id]) < self.spec.topic_error_rate {
                let u = derive_unit(seed, &["noise", "topic-pick", id]);
                r.ad_topic = Some(pick_other(&Topic::ALL, topic, u));
                r.reasoning.push_str("; topic perturbed");
            }
        }
        r
    }
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn classify(&self, view: &ClassifierInputView) -> ClassificationResult {
        (**self).classify(view)
    }
}

/// Classifies the video of every exposure. Results are keyed and ordered by
/// video id; a video seen more than once is classified once.
pub fn classify_dataset<'a>(
    exposures: impl IntoIterator<Item = &'a ExposureRecord>,
    classifier: &dyn Classifier,
) -> Vec<ClassificationResult> {
    let views: BTreeMap<&str, ClassifierInputView> = exposures
        .into_iter()
        .map(|e| (e.video.video_id.as_str(), ClassifierInputView::from(&e.video)))
        .collect();
    let views: Vec<ClassifierInputView> = views.into_values().collect();
    views.par_iter().map(|v| classifier.classify(v)).collect()
}

/// Request body sent to an external vision-language classification service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalRequest {
    pub view: ClassifierInputView,
}

/// Response body of an external classification service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalResponse {
    pub is_ad: bool,
    pub ad_type: Option<String>,
    pub ad_topic: Option<String>,
    #[serde(default)]
    pub visual_indicators: Vec<String>,
    #[serde(default)]
    pub reasoning: String,
}

impl ExternalResponse {
    pub fn parse(body: &str) -> Result<ExternalResponse, ClassifyError> {
        serde_json::from_str(body).map_err(|e| ClassifyError::ExternalResponse(e.to_string()))
    }

    /// Maps the service vocabulary onto ours: "influencer" is a disclosed ad
    /// and "other" an undisclosed one.
    pub fn into_result(self, video_id: &str) -> Result<ClassificationResult, ClassifyError> {
        let bad = |m: String| ClassifyError::ExternalResponse(m);
        let ad_type = match (self.is_ad, self.ad_type.as_deref()) {
            (false, None) => AdType::NonAd,
            (true, Some("formal")) => AdType::Formal,
            (true, Some("influencer")) => AdType::Disclosed,
            (true, Some("other")) => AdType::Undisclosed,
            (is_ad, t) => return Err(bad(format!("is_ad={is_ad} with ad_type {t:?}"))),
        };
        let ad_topic = match (ad_type.is_ad(), self.ad_topic.as_deref()) {
            (false, None) => None,
            (true, Some(t)) => Some(t.parse::<Topic>().map_err(|e| bad(e.to_string()))?),
            (_, t) => return Err(bad(format!("ad_type {ad_type} with ad_topic {t:?}"))),
        };
        let indicators_found: BTreeSet<IndicatorKind> = self
            .visual_indicators
            .iter()
            .filter_map(|s| {
                let s = s.to_lowercase();
                IndicatorKind::ALL.into_iter().find(|k| s.contains(&k.as_str().replace('_', " ")) || s.contains(k.as_str()))
            })
            .collect();
        Ok(ClassificationResult {
            video_id: video_id.to_string(),
            is_ad: ad_type.is_ad(),
            ad_type,
            ad_topic,
            indicators_found: indicators_found.into_iter().collect(),
            reasoning: self.reasoning,
        })
    }
}
