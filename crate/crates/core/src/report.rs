//! Report bundle: overview, profiling tables, summary counts and topic
//! matrices as CSV, plus everything again in `report.json`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl::to_canonical_pretty;
use crate::model::{AdType, AgeVariant, Topic, UserProfile};
use crate::stats::{disclosure_rate, topic_matrix, user_profiling, LabeledDataset, ProfilingResult, Rate, StatsError, TopicMatrix};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("count conservation broken for {user_id}: {detail}")]
    Conservation { user_id: String, detail: String },
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Topic rows of the summary table. Politics is folded into Other there.
pub const SUMMARY_TOPICS: [Topic; 4] = [Topic::Beauty, Topic::Fitness, Topic::Gaming, Topic::Other];

fn summary_topic(t: Topic) -> Topic {
    if t == Topic::Politics {
        Topic::Other
    } else {
        t
    }
}

/// Per-user record counts in the layout of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSummary {
    pub profile: UserProfile,
    pub total_records: u64,
    pub non_ad: u64,
    pub ads: u64,
    pub avg_duration_s: f64,
    /// Ad type → total of that type.
    pub type_totals: BTreeMap<AdType, u64>,
    /// Ad type → topic → count.
    pub topic_counts: BTreeMap<AdType, BTreeMap<Topic, u64>>,
}

impl UserSummary {
    pub fn label(&self) -> String {
        self.profile.label()
    }

    pub fn topic_count(&self, ad_type: AdType, topic: Topic) -> u64 {
        self.topic_counts
            .get(&ad_type)
            .and_then(|m| m.get(&topic))
            .copied()
            .unwrap_or(0)
    }

    pub fn type_total(&self, ad_type: AdType) -> u64 {
        self.type_totals.get(&ad_type).copied().unwrap_or(0)
    }

    /// Topic rows sum to type totals, type totals to the ad count, and ads
    /// plus non-ads to the record count.
    pub fn check_conservation(&self) -> Result<(), ReportError> {
        let fail = |detail: String| {
            Err(ReportError::Conservation {
                user_id: self.profile.user_id.clone(),
                detail,
            })
        };
        for t in AdType::ADS {
            let topics: u64 = self.topic_counts.get(&t).map_or(0, |m| m.values().sum());
            if topics != self.type_total(t) {
                return fail(format!("{t} topics sum to {topics}, total is {}", self.type_total(t)));
            }
        }
        let by_type: u64 = AdType::ADS.iter().map(|t| self.type_total(*t)).sum();
        if by_type != self.ads {
            return fail(format!("ad types sum to {by_type}, ads detected is {}", self.ads));
        }
        if self.ads + self.non_ad != self.total_records {
            return fail(format!(
                "{} ads + {} non-ads != {} records",
                self.ads, self.non_ad, self.total_records
            ));
        }
        Ok(())
    }
}

pub fn summarize(dataset: &LabeledDataset) -> Vec<UserSummary> {
    dataset
        .users
        .iter()
        .map(|u| {
            let mut type_totals = BTreeMap::new();
            let mut topic_counts: BTreeMap<AdType, BTreeMap<Topic, u64>> = BTreeMap::new();
            for t in AdType::ADS {
                type_totals.insert(t, u.count(t));
                topic_counts.insert(t, SUMMARY_TOPICS.iter().map(|s| (*s, 0)).collect());
            }
            for item in &u.items {
                if let (true, Some(topic)) = (item.ad_type.is_ad(), item.ad_topic) {
                    *topic_counts
                        .entry(item.ad_type)
                        .or_default()
                        .entry(summary_topic(topic))
                        .or_default() += 1;
                }
            }
            let non_ad = u.count(AdType::NonAd);
            UserSummary {
                profile: u.profile.clone(),
                total_records: u.items.len() as u64,
                non_ad,
                ads: u.items.len() as u64 - non_ad,
                avg_duration_s: u.mean_duration().unwrap_or(0.0),
                type_totals,
                topic_counts,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverviewRow {
    pub user_id: String,
    pub label: String,
    pub gender: String,
    pub age: u32,
    pub interest: Topic,
    pub total_videos: u64,
    pub total_ads: u64,
    pub ad_share: Rate,
    pub formal: u64,
    pub disclosed: u64,
    pub undisclosed: u64,
    pub avg_video_length_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilingRow {
    pub user_id: String,
    pub label: String,
    #[serde(flatten)]
    pub result: ProfilingResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisclosureRow {
    pub user_id: String,
    pub label: String,
    pub rate: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub overview: Vec<OverviewRow>,
    pub overview_total: Option<Rate>,
    pub profiling_formal: Vec<ProfilingRow>,
    pub profiling_creator: Vec<ProfilingRow>,
    pub disclosure: Vec<DisclosureRow>,
    pub summary: Vec<UserSummary>,
    /// Keyed by "{group}_{types}", e.g. "minor_creator".
    pub topic_matrices: BTreeMap<String, TopicMatrix>,
    pub star_legend: BTreeMap<String, String>,
}

/// Ad-type selections used for profiling tables and topic matrices.
pub const TYPE_SETS: [(&str, &[AdType]); 4] = [
    ("formal", &[AdType::Formal]),
    ("creator", &AdType::CREATOR),
    ("disclosed", &[AdType::Disclosed]),
    ("undisclosed", &[AdType::Undisclosed]),
];

pub fn build_report(dataset: &LabeledDataset) -> Result<Report, ReportError> {
    let summary = summarize(dataset);
    for s in &summary {
        s.check_conservation()?;
    }
    let overview: Vec<OverviewRow> = summary
        .iter()
        .map(|s| OverviewRow {
            user_id: s.profile.user_id.clone(),
            label: s.label(),
            gender: s.profile.gender.title().to_string(),
            age: s.profile.age_group.age_years(),
            interest: s.profile.interest,
            total_videos: s.total_records,
            total_ads: s.ads,
            ad_share: Rate::new(s.ads, s.total_records),
            formal: s.type_total(AdType::Formal),
            disclosed: s.type_total(AdType::Disclosed),
            undisclosed: s.type_total(AdType::Undisclosed),
            avg_video_length_s: s.avg_duration_s,
        })
        .collect();
    let overview_total = (!overview.is_empty()).then(|| {
        Rate::new(
            overview.iter().map(|r| r.total_ads).sum(),
            overview.iter().map(|r| r.total_videos).sum(),
        )
    });
    let profiling = |types: &[AdType]| -> Result<Vec<ProfilingRow>, ReportError> {
        dataset
            .users
            .iter()
            .map(|u| {
                Ok(ProfilingRow {
                    user_id: u.profile.user_id.clone(),
                    label: u.profile.label(),
                    result: user_profiling(dataset, u, types)?,
                })
            })
            .collect()
    };
    let disclosure = dataset
        .users
        .iter()
        .map(|u| DisclosureRow {
            user_id: u.profile.user_id.clone(),
            label: u.profile.label(),
            rate: disclosure_rate(u),
        })
        .collect();
    let mut topic_matrices = BTreeMap::new();
    for variant in AgeVariant::ALL {
        if !dataset.users.iter().any(|u| u.profile.age_group.variant() == variant) {
            continue;
        }
        for (name, types) in TYPE_SETS {
            topic_matrices.insert(format!("{variant}_{name}"), topic_matrix(dataset, variant, types));
        }
    }
    let star_legend = [("*", "p < 0.05"), ("**", "p < 0.01"), ("***", "p < 0.001")]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    Ok(Report {
        overview,
        overview_total,
        profiling_formal: profiling(&[AdType::Formal])?,
        profiling_creator: profiling(&AdType::CREATOR)?,
        disclosure,
        summary,
        topic_matrices,
        star_legend,
    })
}

fn csv_text(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 csv")
}

fn fmt2(x: f64) -> String {
    format!("{x:.2}")
}

fn profiling_csv(rows: &[ProfilingRow]) -> String {
    let mut out = vec![[
        "user_id",
        "user",
        "personalization",
        "baseline",
        "delta_pp",
        "stars",
        "z",
        "p_value",
        "personalized",
        "ads",
        "baseline_matches",
        "baseline_ads",
    ]
    .map(String::from)
    .to_vec()];
    for r in rows {
        let p = &r.result;
        out.push(vec![
            r.user_id.clone(),
            r.label.clone(),
            p.personalization.to_string(),
            p.baseline.to_string(),
            format!("{:+.2}", p.delta_pp),
            p.stars.as_str().to_string(),
            format!("{:.4}", p.z),
            format!("{:.6}", p.p_value),
            p.personalization.numerator.to_string(),
            p.personalization.denominator.to_string(),
            p.baseline.numerator.to_string(),
            p.baseline.denominator.to_string(),
        ]);
    }
    csv_text(out)
}

impl Report {
    /// File name → contents for every file of the bundle.
    pub fn files(&self) -> BTreeMap<String, String> {
        let mut files = BTreeMap::new();

        let mut overview = vec![[
            "user_id",
            "user",
            "gender",
            "age",
            "interest",
            "total_videos",
            "total_ads",
            "ad_share_pct",
            "formal",
            "disclosed",
            "undisclosed",
            "avg_video_length_s",
        ]
        .map(String::from)
        .to_vec()];
        for r in &self.overview {
            overview.push(vec![
                r.user_id.clone(),
                r.label.clone(),
                r.gender.clone(),
                r.age.to_string(),
                r.interest.to_string(),
                r.total_videos.to_string(),
                r.total_ads.to_string(),
                fmt2(r.ad_share.percent()),
                r.formal.to_string(),
                r.disclosed.to_string(),
                r.undisclosed.to_string(),
                fmt2(r.avg_video_length_s),
            ]);
        }
        if let Some(total) = self.overview_total {
            let mut row = vec![String::new(); 12];
            row[1] = "Total".into();
            row[5] = total.denominator.to_string();
            row[6] = total.numerator.to_string();
            row[7] = fmt2(total.percent());
            for (col, field) in [(8, AdType::Formal), (9, AdType::Disclosed), (10, AdType::Undisclosed)] {
                row[col] = self.summary.iter().map(|s| s.type_total(field)).sum::<u64>().to_string();
            }
            overview.push(row);
        }
        files.insert("overview.csv".into(), csv_text(overview));
        files.insert("profiling_formal.csv".into(), profiling_csv(&self.profiling_formal));
        files.insert("profiling_creator.csv".into(), profiling_csv(&self.profiling_creator));

        let users = &self.summary;
        let mut summary = Vec::new();
        let row = |name: &str, f: &dyn Fn(&UserSummary) -> String| {
            std::iter::once(name.to_string()).chain(users.iter().map(f)).collect::<Vec<_>>()
        };
        summary.push(row("User", &|s| s.label()));
        summary.push(row("Interest", &|s| s.profile.interest.to_string()));
        summary.push(row("Age Group", &|s| s.profile.age_group.variant().to_string()));
        summary.push(row("Gender", &|s| s.profile.gender.title().to_string()));
        summary.push(row("Total Records", &|s| s.total_records.to_string()));
        summary.push(row("Non Ad Records", &|s| s.non_ad.to_string()));
        summary.push(row("Ads Detected", &|s| s.ads.to_string()));
        summary.push(row("Avg Video Length", &|s| fmt2(s.avg_duration_s)));
        for t in AdType::ADS {
            summary.push(row(&format!("{} Ads", t.title()), &|s| s.type_total(t).to_string()));
            for topic in SUMMARY_TOPICS {
                summary.push(row(&format!("{} Ads / {}", t.title(), topic.title()), &|s| {
                    s.topic_count(t, topic).to_string()
                }));
            }
        }
        files.insert("summary.csv".into(), csv_text(summary));

        for (key, m) in &self.topic_matrices {
            let mut rows = vec![std::iter::once("interest".to_string())
                .chain(Topic::ALL.iter().map(|t| t.to_string()))
                .collect::<Vec<_>>()];
            for (interest, counts) in &m.counts {
                rows.push(
                    std::iter::once(interest.to_string())
                        .chain(Topic::ALL.iter().map(|t| counts.get(t).copied().unwrap_or(0).to_string()))
                        .collect(),
                );
            }
            files.insert(format!("topic_matrix_{key}.csv"), csv_text(rows));
        }
        files.insert("report.json".into(), to_canonical_pretty(self));
        files
    }

    pub fn write_to(&self, dir: &Path) -> Result<Vec<String>, ReportError> {
        let io = |path: &Path, source| ReportError::Io {
            path: path.display().to_string(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let files = self.files();
        for (name, text) in &files {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| io(&path, e))?;
        }
        Ok(files.into_keys().collect())
    }
}
