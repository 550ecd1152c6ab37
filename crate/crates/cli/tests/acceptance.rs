//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use audit_cli::commands::{cmd_classify, cmd_report, cmd_run, cmd_sample, cmd_validate, load_run, write_run};
use audit_cli::layout::{self, RunDir};
use audit_core::classify::{classify_dataset, Classifier, ClassifierInputView, RuleClassifier};
use audit_core::fixture::materialize;
use audit_core::jsonl::to_canonical_string;
use audit_core::model::{
    AdType, AgeVariant, AnnotationRecord, ExposureRecord, FrameDescriptor, IndicatorKind, OverlayLabel, Topic,
};
use audit_core::orchestrator::{run_audit, AuditDataset, SessionLog};
use audit_core::report::UserSummary;
use audit_core::rng::derive_rng;
use audit_core::scenario::{default_scenario, Scenario};
use audit_core::sim::AdMix;
use audit_core::stats::{personalization_rate, profiling_effect, two_proportion_z, baseline_rate, LabeledDataset, Stars};
use rand::seq::IndexedRandom;
use rand::Rng;

const REFERENCE_SUMMARY: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../core/tests/fixtures/reference_summary.json"
));

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn write_scenario(dir: &Path, s: &Scenario) -> std::path::PathBuf {
    let p = dir.join("scenario.json");
    std::fs::write(&p, s.to_canonical_json()).unwrap();
    p
}

// Expected table rows: user, personalization, baseline, delta pp, stars.
type Row = (&'static str, &'static str, &'static str, f64, Stars);

const FORMAL: [Row; 6] = [
    ("beauty_minor", "4.76% (1/21)", "28.57% (2/7)", -23.81, Stars::None),
    ("beauty_adult", "33.33% (2/6)", "16.90% (86/509)", 16.43, Stars::None),
    ("fitness_minor", "0.00% (0/0)", "3.57% (1/28)", -3.57, Stars::None),
    ("fitness_adult", "19.27% (58/301)", "8.88% (19/214)", 10.39, Stars::Two),
    ("gaming_minor", "42.86% (3/7)", "9.52% (2/21)", 33.34, Stars::One),
    ("gaming_adult", "23.56% (49/208)", "9.12% (28/307)", 14.44, Stars::Three),
];

const CREATOR: [Row; 6] = [
    ("beauty_minor", "91.89% (136/148)", "5.62% (5/89)", 86.27, Stars::Three),
    ("beauty_adult", "64.17% (154/240)", "3.68% (12/326)", 60.49, Stars::Three),
    ("fitness_minor", "88.89% (40/45)", "5.21% (10/192)", 83.68, Stars::Three),
    ("fitness_adult", "91.85% (214/233)", "24.62% (82/333)", 67.23, Stars::Three),
    ("gaming_minor", "93.18% (41/44)", "0.00% (0/193)", 93.18, Stars::Three),
    ("gaming_adult", "88.17% (82/93)", "0.85% (4/473)", 87.32, Stars::Three),
];

/// Reference summary counts written as a run directory, then `audit report`.
fn reference_tables() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let summaries: Vec<UserSummary> = serde_json::from_str(REFERENCE_SUMMARY).unwrap();
    for s in &summaries {
        s.check_conservation().map_err(|e| e.to_string())?;
    }
    let synth = materialize(&summaries);
    let mut scenario = default_scenario();
    let profiles: Vec<_> = scenario.users().cloned().collect();
    ensure!(profiles == synth.profiles, "reference users differ from the default pairs");
    scenario.session.days = 1;
    let mut sessions = Vec::new();
    for p in &synth.profiles {
        sessions.push(SessionLog {
            user_id: p.user_id.clone(),
            session_index: 1,
            records: synth.exposures.iter().filter(|e| e.user_id == p.user_id).cloned().collect(),
        });
    }
    let dataset = AuditDataset {
        scenario,
        seeding: BTreeMap::new(),
        sessions,
    };
    let run = tmp.path().join("run");
    write_run(&run, "reference", &dataset).map_err(|e| e.to_string())?;
    std::fs::write(run.join(layout::CLASSIFICATIONS), to_canonical_string(&synth.classifications)).unwrap();
    let report = cmd_report(&run).map_err(|e| e.to_string())?;

    let mut cells = 0;
    for (rows, expected, name) in [
        (&report.profiling_formal, &FORMAL, "formal"),
        (&report.profiling_creator, &CREATOR, "creator"),
    ] {
        ensure!(rows.len() == 6, "{name}: {} rows", rows.len());
        for (row, (user, pers, base, delta, stars)) in rows.iter().zip(expected.iter()) {
            let r = &row.result;
            ensure!(row.user_id == *user, "{name}: row order {}", row.user_id);
            ensure!(r.personalization.to_string() == *pers, "{name} {user}: personalization {}", r.personalization);
            ensure!(r.baseline.to_string() == *base, "{name} {user}: baseline {}", r.baseline);
            ensure!((r.delta_pp - delta).abs() <= 0.01 + 1e-9, "{name} {user}: delta {:.4} vs {delta}", r.delta_pp);
            ensure!(r.stars == *stars, "{name} {user}: stars {:?} vs {stars:?}", r.stars);
            cells += 4;
        }
    }
    for s in &report.summary {
        s.check_conservation().map_err(|e| e.to_string())?;
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("{cells} cells of both profiling tables reproduced in {elapsed:.2?}"))
}

/// (x1, n1, x2, n2, p) with p evaluated at 40 significant digits.
const HIGH_PRECISION: [(u64, u64, u64, u64, f64); 5] = [
    (3, 7, 2, 21, 0.046130805990429332),
    (58, 301, 19, 214, 0.0011190173697996014),
    (1, 21, 2, 7, 0.077759896439329458),
    (2, 6, 86, 509, 0.2875774110077645),
    (49, 208, 28, 307, 6.537679201669124e-6),
];

fn z_test_oracle() -> Outcome {
    let a = two_proportion_z(3, 7, 2, 21).map_err(|e| e.to_string())?;
    ensure!(a.p_value > 0.040 && a.p_value < 0.050, "p(3/7 vs 2/21) = {}", a.p_value);
    ensure!(a.stars == Stars::One, "stars {:?}", a.stars);
    let b = two_proportion_z(58, 301, 19, 214).map_err(|e| e.to_string())?;
    ensure!(b.p_value > 0.0005 && b.p_value < 0.005, "p(58/301 vs 19/214) = {}", b.p_value);
    ensure!(b.stars == Stars::Two, "stars {:?}", b.stars);
    let mut worst: f64 = 0.0;
    for (x1, n1, x2, n2, p) in HIGH_PRECISION {
        let t = two_proportion_z(x1, n1, x2, n2).map_err(|e| e.to_string())?;
        worst = worst.max((t.p_value - p).abs());
    }
    ensure!(worst < 1e-6, "max |p - reference| = {worst:e}");
    Ok(format!(
        "p = {:.4} (*), p = {:.5} (**), max deviation from reference {worst:.1e}",
        a.p_value, b.p_value
    ))
}

fn labeled(scenario: &Scenario, exposures: &[ExposureRecord], classifier: &dyn Classifier) -> LabeledDataset {
    let results = classify_dataset(exposures, classifier);
    LabeledDataset::join(scenario.users(), exposures, &results).unwrap()
}

fn ground_truth_recovery() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let scenario = default_scenario();
    ensure!(scenario.policy.theta(AdType::Undisclosed, AgeVariant::Minor) == 0.9, "theta changed");
    let path = write_scenario(tmp.path(), &scenario);
    let run = tmp.path().join("run");
    let manifest = cmd_run(&path, &run).map_err(|e| e.to_string())?;
    cmd_classify(&run, None).map_err(|e| e.to_string())?;
    let report = cmd_report(&run).map_err(|e| e.to_string())?;
    let per_user: Vec<u64> = manifest.totals.values().map(|t| t.exposures).collect();
    let mut notes = Vec::new();
    for row in &report.profiling_creator {
        let user = scenario.users().find(|u| u.user_id == row.user_id).unwrap();
        if user.age_group.variant() != AgeVariant::Minor {
            continue;
        }
        let (_, _, expected) = scenario
            .policy
            .expected_profiling(AgeVariant::Minor, &AdType::CREATOR, user.interest);
        let expected = 100.0 * expected;
        let r = &row.result;
        ensure!(
            (r.delta_pp - expected).abs() <= 10.0,
            "{}: delta {:.2} vs expected {expected:.2}",
            row.user_id,
            r.delta_pp
        );
        ensure!(r.p_value < 0.001, "{}: p = {}", row.user_id, r.p_value);
        notes.push(format!("{} {:+.1}", row.user_id, r.delta_pp));
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    Ok(format!(
        "expected {:+.1} pp; {}; {}-{} exposures/user; {elapsed:.1?}",
        100.0 * scenario.policy.expected_profiling(AgeVariant::Minor, &AdType::CREATOR, Topic::Beauty).2,
        notes.join(", "),
        per_user.iter().min().unwrap(),
        per_user.iter().max().unwrap()
    ))
}

/// Formal ads carry no minor profiling; count seeds where any minor's test
/// still comes out significant.
fn null_control() -> Outcome {
    let base = default_scenario();
    ensure!(base.policy.theta(AdType::Formal, AgeVariant::Minor) == 0.0, "formal minor theta is not zero");
    let seeds: Vec<u64> = (1..=20).map(|i| 7_000 + i).collect();
    let rejections: Vec<(u64, bool)> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let mut scenario = base.clone();
                scenario.seed = seed;
                s.spawn(move || {
                    let data = run_audit(&scenario).unwrap();
                    let exposures: Vec<ExposureRecord> = data.exposures().cloned().collect();
                    let ds = labeled(&scenario, &exposures, &RuleClassifier::default());
                    let rejected = ds
                        .users
                        .iter()
                        .filter(|u| u.profile.age_group.variant() == AgeVariant::Minor)
                        .any(|u| {
                            let pers = personalization_rate(u, u.profile.interest, &[AdType::Formal]);
                            let base = baseline_rate(&ds, &u.profile, &[AdType::Formal]).unwrap();
                            profiling_effect(pers, base).p_value < 0.05
                        });
                    (seed, rejected)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let hits: Vec<u64> = rejections.iter().filter(|(_, r)| *r).map(|(s, _)| *s).collect();
    ensure!(hits.len() <= 3, "{} of 20 seeds rejected: {hits:?}", hits.len());
    Ok(format!("{} of 20 seeds had a minor with p < 0.05 (limit 3)", hits.len()))
}

fn random_view(rng: &mut impl Rng, i: usize) -> ClassifierInputView {
    const TEXTS: [&str; 10] = [
        "morning makeup routine",
        "leg day workout at the gym",
        "new consoles are here",
        "use code GLOW20 at checkout",
        "20% off SAVE20",
        "link in bio",
        "shop at https://glow.example/deal",
        "thanks @fuelfit",
        "just a walk by the lake",
        "breaking news on voting",
    ];
    const FRAME_OVERLAYS: [Option<&str>; 6] = [
        None,
        Some("Sponsored"),
        Some("Ad"),
        Some("Paid partnership"),
        Some("Promotional content"),
        Some("New"),
    ];
    let indicators: Vec<IndicatorKind> = IndicatorKind::ALL
        .iter()
        .copied()
        .filter(|_| rng.random_bool(0.15))
        .collect();
    let mut frames: [FrameDescriptor; 3] = Default::default();
    for f in &mut frames {
        f.overlay_text = FRAME_OVERLAYS.choose(rng).unwrap().map(String::from);
        f.visible_text = vec![TEXTS.choose(rng).unwrap().to_string()];
    }
    ClassifierInputView {
        video_id: format!("r{i:04}"),
        author: "@someone".into(),
        description: TEXTS.choose(rng).unwrap().to_string(),
        hashtags: ["#gym", "#makeup", "#ad", "#gaming", "#fyp"]
            .iter()
            .filter(|_| rng.random_bool(0.3))
            .map(|s| s.to_string())
            .collect(),
        transcript: rng.random_bool(0.5).then(|| TEXTS.choose(rng).unwrap().to_string()),
        duration_s: 10.0,
        overlay_label: *OverlayLabel::ALL.choose(rng).unwrap(),
        commercial_indicators: indicators,
        frames,
    }
}

fn hierarchy_suite() -> Outcome {
    let classifier = RuleClassifier::default();
    let mut rng = derive_rng(42, &["acceptance", "views"]);
    let mut violations = Vec::new();
    for i in 0..1000 {
        let v = random_view(&mut rng, i);
        let r = classifier.classify(&v);
        if r.validate().is_err() {
            violations.push(format!("{}: incoherent", v.video_id));
        }
        if classifier.classify(&v.clone()) != r {
            violations.push(format!("{}: impure", v.video_id));
        }
        let overlays: Vec<OverlayLabel> = std::iter::once(v.overlay_label)
            .chain(v.frames.iter().filter_map(|f| f.overlay_text.as_deref().and_then(OverlayLabel::from_display_text)))
            .collect();
        let expected = if overlays.iter().any(|l| l.is_formal()) {
            Some(AdType::Formal)
        } else if overlays.iter().any(|l| l.is_creator_disclosure()) {
            Some(AdType::Disclosed)
        } else {
            None
        };
        if let Some(t) = expected {
            if r.ad_type != t {
                violations.push(format!("{}: overlay says {t}, got {}", v.video_id, r.ad_type));
            }
            let mut more = v.clone();
            more.commercial_indicators = IndicatorKind::ALL.to_vec();
            more.hashtags.push("#sponsored".into());
            let r2 = classifier.classify(&more);
            if (r2.ad_type, r2.ad_topic) != (r.ad_type, r.ad_topic) {
                violations.push(format!("{}: indicators changed a labelled video", v.video_id));
            }
        }
        if r.ad_type == AdType::Disclosed && !r.indicators_found.is_empty() {
            let mut bare = v.clone();
            bare.overlay_label = OverlayLabel::None;
            for f in &mut bare.frames {
                f.overlay_text = None;
            }
            if classifier.classify(&bare).ad_type != AdType::Undisclosed {
                violations.push(format!("{}: stripped disclosure is not undisclosed", v.video_id));
            }
        }
    }
    ensure!(violations.is_empty(), "{} violations, first: {}", violations.len(), violations[0]);

    let scenario = default_scenario();
    let data = run_audit(&scenario).map_err(|e| e.to_string())?;
    let (mut labelled, mut correct) = (0, 0);
    for e in data.exposures() {
        let truth = e.video.truth.unwrap().true_ad_type;
        if matches!(truth, AdType::Formal | AdType::Disclosed) {
            labelled += 1;
            if classifier.classify(&ClassifierInputView::from(&e.video)).ad_type == truth {
                correct += 1;
            }
        }
    }
    ensure!(labelled > 0 && correct == labelled, "formal/disclosed accuracy {correct}/{labelled}");
    Ok(format!("1000 random views, 0 violations; formal/disclosed accuracy {correct}/{labelled}"))
}

fn noise_calibration() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut scenario = default_scenario();
    let even: BTreeMap<AdType, f64> = AdType::ALL.iter().map(|t| (*t, 0.25)).collect();
    scenario.policy.ad_mix = AdMix::Shared(even);
    let path = write_scenario(tmp.path(), &scenario);
    let run = tmp.path().join("run");
    cmd_run(&path, &run).map_err(|e| e.to_string())?;
    let rate = 0.097;
    cmd_classify(&run, Some(audit_core::classify::NoiseSpec { type_error_rate: rate, topic_error_rate: 0.0, seed: 11 }))
        .map_err(|e| e.to_string())?;

    let loaded = load_run(&run).map_err(|e| e.to_string())?;
    let truth: Vec<AnnotationRecord> = loaded
        .exposures
        .iter()
        .map(|e| {
            let t = e.video.truth.unwrap();
            AnnotationRecord {
                annotator_id: "truth".into(),
                video_id: e.video.video_id.clone(),
                ad_type: t.true_ad_type,
                ad_topic: t.true_ad_type.is_ad().then_some(t.true_topic),
            }
        })
        .collect();
    let truth_file = run.join(RunDir::annotation_file("truth"));
    std::fs::create_dir_all(truth_file.parent().unwrap()).unwrap();
    std::fs::write(&truth_file, to_canonical_string(&truth)).unwrap();
    let v = cmd_validate(&run, &[truth_file]).map_err(|e| e.to_string())?;
    let acc = &v.annotators[0];
    let n = acc.ad_type.rate.denominator;
    ensure!(n >= 5000, "only {n} items");
    let pct = acc.ad_type.rate.percent();
    ensure!((pct - 90.3).abs() <= 1.5, "accuracy {pct:.2}% over {n}");
    let m = &acc.ad_type_confusion;
    let mut worst: f64 = 0.0;
    for (ri, reference) in m.labels.iter().enumerate() {
        let expected = m.row_total(reference) as f64 * rate / 3.0;
        for (pi, _) in m.labels.iter().enumerate().filter(|(pi, _)| *pi != ri) {
            let ratio = m.counts[ri][pi] as f64 / expected;
            worst = worst.max(ratio);
        }
    }
    ensure!(worst <= 2.0, "an off-diagonal cell is {worst:.2}x its expectation");
    Ok(format!("accuracy {pct:.2}% over {n} items; largest off-diagonal cell {worst:.2}x expectation"))
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_scenario(tmp.path(), &default_scenario());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ma = cmd_run(&path, &a).map_err(|e| e.to_string())?;
    let mb = cmd_run(&path, &b).map_err(|e| e.to_string())?;
    ensure!(ma.content_hash == mb.content_hash, "manifest hashes differ");
    let logs: Vec<&String> = ma.files.keys().filter(|f| f.starts_with(layout::SESSIONS)).collect();
    for rel in &logs {
        let (x, y) = (std::fs::read(a.join(rel)).unwrap(), std::fs::read(b.join(rel)).unwrap());
        ensure!(x == y, "{rel} differs");
    }
    Ok(format!("{} session logs byte-identical, manifest hash {}", logs.len(), &ma.content_hash[..16]))
}

fn sampler() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_scenario(tmp.path(), &default_scenario());
    let run = tmp.path().join("run");
    cmd_run(&path, &run).map_err(|e| e.to_string())?;
    cmd_classify(&run, None).map_err(|e| e.to_string())?;
    let (file, cells) = cmd_sample(&run, 5, 1234).map_err(|e| e.to_string())?;
    ensure!(cells.len() == 6 * 4, "{} cells", cells.len());
    for c in &cells {
        ensure!(
            c.video_ids.len() == c.cell_size.min(5),
            "{} {}: {} of {}",
            c.user_id,
            c.ad_type,
            c.video_ids.len(),
            c.cell_size
        );
    }
    let bytes = std::fs::read(&file).unwrap();
    let (_, again) = cmd_sample(&run, 5, 1234).map_err(|e| e.to_string())?;
    ensure!(again == cells && std::fs::read(&file).unwrap() == bytes, "resample differs");
    let small = cells.iter().filter(|c| c.cell_size < 5).count();
    Ok(format!(
        "{} cells, {} videos, {small} cells smaller than 5, reproducible",
        cells.len(),
        cells.iter().map(|c| c.video_ids.len()).sum::<usize>()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("reference-tables", reference_tables),
        ("z-test-oracle", z_test_oracle),
        ("ground-truth-recovery", ground_truth_recovery),
        ("null-control", null_control),
        ("classification-hierarchy", hierarchy_suite),
        ("noise-calibration", noise_calibration),
        ("determinism", determinism),
        ("sampler", sampler),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS {name}: {detail}"),
            Ok(Err(detail)) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {name}: panicked");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
