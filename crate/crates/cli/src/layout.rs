//! On-disk layout of a run directory and its manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use audit_core::jsonl::{read_exposure_log, to_canonical_pretty};
use audit_core::model::ExposureRecord;
use audit_core::orchestrator::UserTotals;
use audit_core::scenario::Scenario;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const SCENARIO: &str = "scenario.json";
pub const SEEDING: &str = "seeding";
pub const SESSIONS: &str = "sessions";
pub const CLASSIFICATIONS: &str = "classifications.jsonl";
pub const SAMPLES: &str = "samples";
pub const ANNOTATIONS: &str = "annotations";
pub const REPORT: &str = "report";

#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn session_file(user_id: &str, session_index: u32) -> String {
        format!("{SESSIONS}/{user_id}__s{session_index:02}.jsonl")
    }

    pub fn seeding_file(user_id: &str) -> String {
        format!("{SEEDING}/{user_id}.jsonl")
    }

    pub fn annotation_file(annotator_id: &str) -> String {
        format!("{ANNOTATIONS}/{annotator_id}.jsonl")
    }

    /// Fails with `MissingArtifact` when `rel` does not exist.
    pub fn require(&self, rel: &str, hint: &str) -> Result<PathBuf, CliError> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(CliError::MissingArtifact {
                path: p.display().to_string(),
                hint: hint.to_string(),
            })
        }
    }

    pub fn read_manifest(&self) -> Result<RunManifest, CliError> {
        let p = self.require(MANIFEST, "run `audit run` first")?;
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Invariant(format!("{}: {e}", p.display())))
    }

    pub fn read_scenario(&self) -> Result<Scenario, CliError> {
        let p = self.require(SCENARIO, "run `audit run` first")?;
        Ok(Scenario::load(&p)?)
    }

    /// Collection-phase exposures listed in the manifest, in manifest order.
    pub fn read_sessions(&self, manifest: &RunManifest) -> Result<Vec<ExposureRecord>, CliError> {
        let mut out = Vec::new();
        for rel in manifest.files.keys().filter(|f| f.starts_with(SESSIONS)) {
            let p = self.require(rel, "run directory is incomplete")?;
            out.extend(read_exposure_log(&p).map_err(|source| CliError::Log {
                path: p.display().to_string(),
                source,
            })?);
        }
        Ok(out)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub scenario_path: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub created_at: String,
    pub totals: BTreeMap<String, UserTotals>,
    /// Relative path → SHA-256 of the file written by the run.
    pub files: BTreeMap<String, String>,
    /// Hash over everything except `scenario_path` and `created_at`; equal
    /// for reruns of the same scenario.
    pub content_hash: String,
}

#[derive(Serialize)]
struct HashedPart<'a> {
    run_id: &'a str,
    scenario_hash: &'a str,
    seed: u64,
    totals: &'a BTreeMap<String, UserTotals>,
    files: &'a BTreeMap<String, String>,
}

impl RunManifest {
    pub fn compute_content_hash(&self) -> String {
        let part = HashedPart {
            run_id: &self.run_id,
            scenario_hash: &self.scenario_hash,
            seed: self.seed,
            totals: &self.totals,
            files: &self.files,
        };
        sha256_hex(to_canonical_pretty(&part).as_bytes())
    }

    /// Totals must match the rows actually present in the logs, and every
    /// inventoried file must hash to its recorded value.
    pub fn verify(&self, dir: &RunDir) -> Result<(), CliError> {
        if self.compute_content_hash() != self.content_hash {
            return Err(CliError::Invariant("manifest content hash does not match its contents".into()));
        }
        for (rel, hash) in &self.files {
            let p = dir.require(rel, "run directory is incomplete")?;
            let bytes = std::fs::read(&p).map_err(|e| CliError::io(&p, e))?;
            if &sha256_hex(&bytes) != hash {
                return Err(CliError::Invariant(format!("{rel} was modified after the run")));
            }
        }
        let exposures = dir.read_sessions(self)?;
        let mut counted: BTreeMap<&str, u64> = BTreeMap::new();
        for e in &exposures {
            *counted.entry(e.user_id.as_str()).or_default() += 1;
        }
        for (user, totals) in &self.totals {
            let n = counted.get(user.as_str()).copied().unwrap_or(0);
            if n != totals.exposures {
                return Err(CliError::Invariant(format!(
                    "manifest lists {} exposures for {user}, logs hold {n}",
                    totals.exposures
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
