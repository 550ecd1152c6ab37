//! Turns summary counts back into synthetic exposure logs and
//! classifications, so that tables can be recomputed from published
//! aggregates through the normal pipeline.

use crate::model::{
    AdType, ClassificationResult, Engagement, ExposureRecord, FrameDescriptor, GroundTruth, OverlayLabel, Topic,
    UserProfile, VideoRecord,
};
use crate::report::UserSummary;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyntheticDataset {
    pub profiles: Vec<UserProfile>,
    pub exposures: Vec<ExposureRecord>,
    pub classifications: Vec<ClassificationResult>,
}

fn overlay_for(ad_type: AdType) -> OverlayLabel {
    match ad_type {
        AdType::Formal => OverlayLabel::Sponsored,
        AdType::Disclosed => OverlayLabel::PaidPartnership,
        AdType::Undisclosed | AdType::NonAd => OverlayLabel::None,
    }
}

/// One record per counted video. Every video lasts the user's average
/// duration; all records of a user belong to a single session.
pub fn materialize(summaries: &[UserSummary]) -> SyntheticDataset {
    let mut out = SyntheticDataset::default();
    for s in summaries {
        let user_id = &s.profile.user_id;
        out.profiles.push(s.profile.clone());
        let mut labels: Vec<(AdType, Option<Topic>)> = Vec::new();
        for (ad_type, topics) in &s.topic_counts {
            for (topic, n) in topics {
                labels.extend(std::iter::repeat_n((*ad_type, Some(*topic)), *n as usize));
            }
        }
        labels.extend(std::iter::repeat_n((AdType::NonAd, None), s.non_ad as usize));
        let duration = if s.avg_duration_s > 0.0 { s.avg_duration_s } else { 1.0 };
        for (i, (ad_type, ad_topic)) in labels.into_iter().enumerate() {
            let video_id = format!("{user_id}-{:06}", i + 1);
            let overlay = overlay_for(ad_type);
            let video = VideoRecord {
                video_id: video_id.clone(),
                author: "@fixture".into(),
                description: String::new(),
                hashtags: Vec::new(),
                transcript: None,
                duration_s: duration,
                overlay_label: overlay,
                commercial_indicators: Vec::new(),
                frames: std::array::from_fn(|_| FrameDescriptor {
                    overlay_text: overlay.display_text().map(String::from),
                    visible_text: Vec::new(),
                }),
                truth: Some(GroundTruth {
                    true_ad_type: ad_type,
                    true_topic: ad_topic.unwrap_or(Topic::Other),
                }),
            };
            out.exposures.push(ExposureRecord {
                user_id: user_id.clone(),
                session_index: 1,
                position: i as u32 + 1,
                sim_time_s: i as f64 * duration,
                engaged: Engagement::skip(),
                video,
            });
            out.classifications.push(ClassificationResult {
                video_id,
                is_ad: ad_type.is_ad(),
                ad_type,
                ad_topic,
                indicators_found: Vec::new(),
                reasoning: "fixture".into(),
            });
        }
    }
    out
}
