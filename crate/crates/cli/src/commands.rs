//! Pipeline stages. Each reads and writes files under one run directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use audit_core::classify::{classify_dataset, wrap_with_noise, Classifier, NoiseSpec, RuleClassifier};
use audit_core::jsonl::{read_annotations, read_classifications, to_canonical_pretty, to_canonical_string};
use audit_core::model::{AnnotationRecord, ClassificationResult, ExposureRecord};
use audit_core::orchestrator::{run_audit, AuditDataset};
use audit_core::report::{build_report, Report};
use audit_core::scenario::Scenario;
use audit_core::stats::{agreement, confusion_matrix, stratified_sample, Agreement, ConfusionMatrix, LabelField, LabeledDataset, SampleCell};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::layout::{self, sha256_hex, write_file, RunDir, RunManifest};

/// Runs seeding and all collection sessions and writes the logs.
pub fn cmd_run(scenario_path: &Path, out_dir: &Path) -> Result<RunManifest, CliError> {
    let scenario = Scenario::load(scenario_path)?;
    let dataset = run_audit(&scenario)?;
    write_run(out_dir, &scenario_path.display().to_string(), &dataset)
}

/// Writes scenario, seeding logs, session logs and the manifest. Stale
/// seeding and session files from an earlier run are removed first.
pub fn write_run(out_dir: &Path, scenario_path: &str, dataset: &AuditDataset) -> Result<RunManifest, CliError> {
    let scenario = &dataset.scenario;
    let dir = RunDir::new(out_dir);
    for stage in [layout::SEEDING, layout::SESSIONS] {
        let p = dir.path(stage);
        if p.exists() {
            std::fs::remove_dir_all(&p).map_err(|e| CliError::io(&p, e))?;
        }
    }

    let mut files = BTreeMap::new();
    let mut put = |rel: String, text: String| -> Result<(), CliError> {
        write_file(&dir.path(&rel), text.as_bytes())?;
        files.insert(rel, sha256_hex(text.as_bytes()));
        Ok(())
    };
    put(layout::SCENARIO.to_string(), scenario.to_canonical_json())?;
    for (user, (_, log)) in &dataset.seeding {
        put(RunDir::seeding_file(user), to_canonical_string(log))?;
    }
    for log in &dataset.sessions {
        put(
            RunDir::session_file(&log.user_id, log.session_index),
            to_canonical_string(&log.records),
        )?;
    }

    let scenario_hash = scenario.config_hash();
    let mut manifest = RunManifest {
        run_id: format!("run-{}", &scenario_hash[..12]),
        scenario_path: scenario_path.to_string(),
        scenario_hash,
        seed: scenario.seed,
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        totals: dataset.totals(),
        files,
        content_hash: String::new(),
    };
    manifest.content_hash = manifest.compute_content_hash();
    write_file(&dir.path(layout::MANIFEST), to_canonical_pretty(&manifest).as_bytes())?;
    Ok(manifest)
}

/// A verified run directory with its collection-phase exposures.
pub struct LoadedRun {
    pub dir: RunDir,
    pub manifest: RunManifest,
    pub scenario: Scenario,
    pub exposures: Vec<ExposureRecord>,
}

pub fn load_run(run_dir: &Path) -> Result<LoadedRun, CliError> {
    let dir = RunDir::new(run_dir);
    let manifest = dir.read_manifest()?;
    manifest.verify(&dir)?;
    let scenario = dir.read_scenario()?;
    let exposures = dir.read_sessions(&manifest)?;
    Ok(LoadedRun {
        dir,
        manifest,
        scenario,
        exposures,
    })
}

impl LoadedRun {
    pub fn classifications(&self) -> Result<Vec<ClassificationResult>, CliError> {
        let p = self.dir.require(layout::CLASSIFICATIONS, "run `audit classify` first")?;
        read_classifications(&p).map_err(|source| CliError::Log {
            path: p.display().to_string(),
            source,
        })
    }

    pub fn labeled(&self) -> Result<LabeledDataset, CliError> {
        let classifications = self.classifications()?;
        Ok(LabeledDataset::join(
            self.scenario.users(),
            &self.exposures,
            &classifications,
        )?)
    }
}

/// Parses `type=R,topic=R,seed=N`; omitted keys default to 0.
pub fn parse_noise(spec: &str) -> Result<NoiseSpec, CliError> {
    let mut noise = NoiseSpec {
        type_error_rate: 0.0,
        topic_error_rate: 0.0,
        seed: 0,
    };
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("noise entry `{part}` is not key=value")))?;
        let bad = || CliError::Usage(format!("noise value `{value}` for `{key}` is not a number"));
        match key.trim() {
            "type" => noise.type_error_rate = value.parse().map_err(|_| bad())?,
            "topic" => noise.topic_error_rate = value.parse().map_err(|_| bad())?,
            "seed" => noise.seed = value.parse().map_err(|_| bad())?,
            other => return Err(CliError::Usage(format!("unknown noise key `{other}`"))),
        }
    }
    for (name, v) in [("type", noise.type_error_rate), ("topic", noise.topic_error_rate)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(CliError::Usage(format!("noise rate `{name}` = {v} is outside [0, 1]")));
        }
    }
    Ok(noise)
}

/// Classifies every collected video; returns the number of results.
pub fn cmd_classify(run_dir: &Path, noise: Option<NoiseSpec>) -> Result<usize, CliError> {
    let run = load_run(run_dir)?;
    let classifier: Box<dyn Classifier> = match noise {
        Some(spec) => Box::new(wrap_with_noise(RuleClassifier::default(), spec).map_err(|e| CliError::Usage(e.to_string()))?),
        None => Box::new(RuleClassifier::default()),
    };
    let results = classify_dataset(&run.exposures, classifier.as_ref());
    write_file(
        &run.dir.path(layout::CLASSIFICATIONS),
        to_canonical_string(&results).as_bytes(),
    )?;
    Ok(results.len())
}

pub fn cmd_report(run_dir: &Path) -> Result<Report, CliError> {
    let run = load_run(run_dir)?;
    let report = build_report(&run.labeled()?)?;
    report.write_to(&run.dir.path(layout::REPORT))?;
    Ok(report)
}

pub fn sample_file_name(per_cell: usize, seed: u64) -> String {
    format!("{}/sample_k{per_cell}_seed{seed}.jsonl", layout::SAMPLES)
}

pub fn cmd_sample(run_dir: &Path, per_cell: usize, seed: u64) -> Result<(PathBuf, Vec<SampleCell>), CliError> {
    let run = load_run(run_dir)?;
    let cells = stratified_sample(&run.labeled()?, per_cell, seed);
    let path = run.dir.path(&sample_file_name(per_cell, seed));
    write_file(&path, to_canonical_string(&cells).as_bytes())?;
    Ok((path, cells))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorAccuracy {
    pub annotator_id: String,
    pub source: String,
    pub items: usize,
    /// Pipeline labels measured against this annotator.
    pub ad_type: Agreement,
    pub ad_topic: Agreement,
    pub ad_type_confusion: ConfusionMatrix,
    pub ad_topic_confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub first: String,
    pub second: String,
    pub ad_type: Agreement,
    pub ad_topic: Agreement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub annotators: Vec<AnnotatorAccuracy>,
    pub agreement: Vec<PairAgreement>,
}

fn annotator_name(records: &[AnnotationRecord], path: &Path) -> Result<String, CliError> {
    let mut ids: Vec<&str> = records.iter().map(|r| r.annotator_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    match ids.as_slice() {
        [] => Ok(path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()),
        [one] => Ok(one.to_string()),
        _ => Err(CliError::Invariant(format!(
            "{} mixes annotators {}",
            path.display(),
            ids.join(", ")
        ))),
    }
}

/// Pipeline accuracy against each annotation file, plus agreement between
/// every pair of files. Written to `report/validation.json`.
pub fn cmd_validate(run_dir: &Path, annotation_files: &[PathBuf]) -> Result<ValidationReport, CliError> {
    let run = load_run(run_dir)?;
    let predicted = run.classifications()?;
    let mut sets = Vec::new();
    for path in annotation_files {
        if !path.exists() {
            return Err(CliError::MissingArtifact {
                path: path.display().to_string(),
                hint: "annotation file not found".into(),
            });
        }
        let records = read_annotations(path).map_err(|source| CliError::Log {
            path: path.display().to_string(),
            source,
        })?;
        let name = annotator_name(&records, path)?;
        sets.push((name, path.display().to_string(), records));
    }
    let mut annotators = Vec::new();
    for (name, source, records) in &sets {
        annotators.push(AnnotatorAccuracy {
            annotator_id: name.clone(),
            source: source.clone(),
            items: records.len(),
            ad_type: agreement(records, &predicted, LabelField::AdType)?,
            ad_topic: agreement(records, &predicted, LabelField::AdTopic)?,
            ad_type_confusion: confusion_matrix(records, &predicted, LabelField::AdType)?,
            ad_topic_confusion: confusion_matrix(records, &predicted, LabelField::AdTopic)?,
        });
    }
    let mut pairs = Vec::new();
    for (i, (a, _, ra)) in sets.iter().enumerate() {
        for (b, _, rb) in &sets[i + 1..] {
            pairs.push(PairAgreement {
                first: a.clone(),
                second: b.clone(),
                ad_type: agreement(ra, rb, LabelField::AdType)?,
                ad_topic: agreement(ra, rb, LabelField::AdTopic)?,
            });
        }
    }
    let report = ValidationReport {
        annotators,
        agreement: pairs,
    };
    write_file(
        &run.dir.path(&format!("{}/validation.json", layout::REPORT)),
        to_canonical_pretty(&report).as_bytes(),
    )?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_spec_parsing() {
        let n = parse_noise("type=0.097,topic=0.05,seed=7").unwrap();
        assert_eq!((n.type_error_rate, n.topic_error_rate, n.seed), (0.097, 0.05, 7));
        assert_eq!(parse_noise("seed=3").unwrap().type_error_rate, 0.0);
        for bad in ["type", "type=x", "colour=1", "type=1.5"] {
            let e = parse_noise(bad).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{bad}");
        }
    }
}
