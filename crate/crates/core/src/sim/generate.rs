//! Synthetic feed items.
//!
//! A video is drawn in a fixed order: ground-truth ad type, topic, duration,
//! overlay, commercial indicators, then the text that renders them. All text
//! comes from vocabularies the indicator and topic scanners recognise, and
//! non-ad text never contains an indicator pattern.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::model::{
    AdType, AgeVariant, FrameDescriptor, GroundTruth, IndicatorKind, OverlayLabel, Topic, UserProfile, VideoRecord,
};
use crate::sim::policy::ProfilingPolicy;

const MIN_DURATION_S: f64 = 1.0;

const BEAUTY_WORDS: &[&str] = &["makeup", "skincare", "cosmetics", "clearskin", "kbeauty", "glasskin", "beauty"];
const FITNESS_WORDS: &[&str] = &["workout", "gym", "abs", "nutrition", "gymtok", "supplements", "fitness"];
const GAMING_WORDS: &[&str] = &["gaming", "gamer", "gamerlife", "consoles", "streamers", "video games"];
const POLITICS_WORDS: &[&str] = &["politics", "voting", "politicians", "breaking news", "political debate"];
const OTHER_WORDS: &[&str] = &["cooking", "travel", "pets", "comedy", "dance", "music", "fashion", "diy", "recipe"];

const FILLER: &[&str] = &[
    "day in my life",
    "quick tips",
    "you need to see this",
    "part two",
    "weekend vibes",
    "honest thoughts",
    "storytime",
    "new favourite",
];

const BRANDS: &[&str] = &["glowlab", "lumeskin", "ironpeak", "fuelfit", "pixelforge", "questgear", "brightco"];
const CODE_STEMS: &[&str] = &["GLOW", "SAVE", "FIT", "GG", "DEAL", "VIP"];
const PROMO_TAGS: &[&str] = &["ad", "werbung", "partnership", "collaboration", "sponsored"];
const CTA: &[&str] = &["buy now", "shop today", "link in bio"];

pub fn topic_words(topic: Topic) -> &'static [&'static str] {
    match topic {
        Topic::Beauty => BEAUTY_WORDS,
        Topic::Fitness => FITNESS_WORDS,
        Topic::Gaming => GAMING_WORDS,
        Topic::Politics => POLITICS_WORDS,
        Topic::Other => OTHER_WORDS,
    }
}

fn draw_weighted<K: Copy, R: Rng + ?Sized>(rng: &mut R, items: impl IntoIterator<Item = (K, f64)>) -> Option<K> {
    let items: Vec<(K, f64)> = items.into_iter().collect();
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, w) in &items {
        acc += w;
        if u < acc {
            return Some(*k);
        }
    }
    // rounding slack: the last positive-weight entry
    items.iter().rev().find(|(_, w)| *w > 0.0).map(|(k, _)| *k)
}

fn draw_ad_type<R: Rng + ?Sized>(rng: &mut R, policy: &ProfilingPolicy, age: AgeVariant) -> AdType {
    let mix = policy.ad_mix.for_age(age);
    let drawn = draw_weighted(rng, AdType::ALL.into_iter().map(|t| (t, mix.get(&t).copied().unwrap_or(0.0))))
        .unwrap_or(AdType::NonAd);
    if drawn == AdType::Disclosed && !rng.random_bool(policy.disclosure_honesty) {
        AdType::Undisclosed
    } else {
        drawn
    }
}

fn draw_duration<R: Rng + ?Sized>(rng: &mut R, policy: &ProfilingPolicy, age: AgeVariant) -> f64 {
    let d = policy.duration(age);
    if d.sd_s == 0.0 {
        return d.mean_s.max(MIN_DURATION_S);
    }
    let normal = Normal::new(d.mean_s, d.sd_s).expect("validated duration parameters");
    for _ in 0..64 {
        let x = normal.sample(rng);
        if x >= MIN_DURATION_S {
            // whole milliseconds keep logs short and exact
            return (x * 1000.0).round() / 1000.0;
        }
    }
    MIN_DURATION_S
}

fn draw_indicators<R: Rng + ?Sized>(rng: &mut R, ad_type: AdType) -> Vec<IndicatorKind> {
    let count = match ad_type {
        AdType::NonAd => 0,
        AdType::Undisclosed => rng.random_range(1..=3),
        AdType::Formal | AdType::Disclosed => rng.random_range(0..=2),
    };
    let mut kinds: Vec<IndicatorKind> = IndicatorKind::ALL.choose_multiple(rng, count).copied().collect();
    kinds.sort();
    kinds
}

/// Draws one feed item for `profile`. `video_id` is assigned by the caller.
pub fn generate_video<R: Rng + ?Sized>(
    profile: &UserProfile,
    policy: &ProfilingPolicy,
    rng: &mut R,
    video_id: String,
) -> VideoRecord {
    let age = profile.age_group.variant();
    let ad_type = draw_ad_type(rng, policy, age);
    let topic = if rng.random_bool(policy.theta(ad_type, age)) {
        profile.interest
    } else {
        draw_weighted(rng, policy.background_topic_dist.iter().map(|(t, p)| (*t, *p))).unwrap_or(Topic::Other)
    };
    let duration_s = draw_duration(rng, policy, age);
    let overlay_label = match ad_type {
        AdType::Formal => *[OverlayLabel::Sponsored, OverlayLabel::Ad].choose(rng).unwrap(),
        AdType::Disclosed => *[OverlayLabel::PaidPartnership, OverlayLabel::PromotionalContent]
            .choose(rng)
            .unwrap(),
        AdType::Undisclosed | AdType::NonAd => OverlayLabel::None,
    };
    let indicators = draw_indicators(rng, ad_type);
    render(rng, video_id, ad_type, topic, duration_s, overlay_label, indicators)
}

/// A search result for a query about `topic`: organic content whose topic
/// matches the query with the policy's search precision.
pub fn generate_search_result<R: Rng + ?Sized>(
    profile: &UserProfile,
    policy: &ProfilingPolicy,
    topic: Topic,
    rng: &mut R,
    video_id: String,
) -> VideoRecord {
    let age = profile.age_group.variant();
    let topic = if rng.random_bool(policy.search_precision) {
        topic
    } else {
        draw_weighted(rng, policy.background_topic_dist.iter().map(|(t, p)| (*t, *p))).unwrap_or(Topic::Other)
    };
    let duration_s = draw_duration(rng, policy, age);
    render(rng, video_id, AdType::NonAd, topic, duration_s, OverlayLabel::None, Vec::new())
}

fn render<R: Rng + ?Sized>(
    rng: &mut R,
    video_id: String,
    ad_type: AdType,
    topic: Topic,
    duration_s: f64,
    overlay_label: OverlayLabel,
    indicators: Vec<IndicatorKind>,
) -> VideoRecord {
    let vocab = topic_words(topic);
    let n_terms = rng.random_range(1..=2);
    let mut topic_terms: Vec<&str> = vocab.choose_multiple(rng, n_terms).copied().collect();
    topic_terms.shuffle(rng);
    let brand = *BRANDS.choose(rng).unwrap();
    let creator = format!("creator{}", rng.random_range(100..1000));
    let author = if ad_type == AdType::Formal {
        format!("@{brand}")
    } else {
        format!("@{creator}")
    };

    let mut description = format!("{} {}", FILLER.choose(rng).unwrap(), topic_terms.join(" "));
    let mut hashtags: Vec<String> = topic_terms.iter().map(|w| format!("#{}", w.replace(' ', ""))).collect();
    let mut frame_text: [Vec<String>; 3] = [vec![topic_terms[0].to_string()], Vec::new(), Vec::new()];

    for kind in &indicators {
        match kind {
            IndicatorKind::DiscountCode => {
                let code = format!("{}{}", CODE_STEMS.choose(rng).unwrap(), rng.random_range(1..10) * 5);
                description.push_str(&format!(" use code {code} at checkout"));
                frame_text[1].push(format!("code {code}"));
            }
            IndicatorKind::PromoHashtag => hashtags.push(format!("#{}", PROMO_TAGS.choose(rng).unwrap())),
            IndicatorKind::BrandMention => description.push_str(&format!(" thanks @{brand}")),
            IndicatorKind::CallToAction => {
                let cta = *CTA.choose(rng).unwrap();
                description.push_str(&format!(" {cta}"));
                frame_text[2].push(cta.to_string());
            }
            IndicatorKind::ProductEndorsement => frame_text[1].push("product_endorsement".into()),
            IndicatorKind::Url => description.push_str(&format!(" https://{brand}.example/deal")),
            IndicatorKind::QrCode => frame_text[2].push("qr_code".into()),
        }
    }

    let transcript = rng
        .random_bool(0.7)
        .then(|| format!("so today it is all about {}", topic_terms.last().unwrap()));
    let overlay_text = overlay_label.display_text().map(str::to_string);
    let frames = frame_text.map(|visible_text| FrameDescriptor {
        overlay_text: overlay_text.clone(),
        visible_text,
    });

    VideoRecord {
        video_id,
        author,
        description,
        hashtags,
        transcript,
        duration_s,
        overlay_label,
        commercial_indicators: indicators,
        frames,
        truth: Some(GroundTruth {
            true_ad_type: ad_type,
            true_topic: topic,
        }),
    }
}
