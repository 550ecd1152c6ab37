//! Line-delimited record files.
//!
//! Records are written canonically: UTF-8, one JSON object per line, object
//! keys sorted lexicographically at every depth, `\n` line endings. Reading a
//! canonical file and writing it back is byte-identical.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::model::{AnnotationRecord, ClassificationResult, ExposureRecord, ModelError};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("invariant violation at line {line}: {message}")]
    InvariantViolation { line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> LogError + '_ {
    move |source| LogError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serializes one record to its canonical single-line form (no newline).
pub fn to_canonical_line<T: Serialize>(record: &T) -> String {
    // serde_json::Map is a BTreeMap here, so going through Value sorts keys.
    let value = serde_json::to_value(record).expect("record types serialize infallibly");
    serde_json::to_string(&value).expect("values serialize infallibly")
}

pub fn to_canonical_string<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&to_canonical_line(r));
        out.push('\n');
    }
    out
}

/// Pretty canonical JSON for single-document files (manifests, reports).
pub fn to_canonical_pretty<T: Serialize>(doc: &T) -> String {
    let value = serde_json::to_value(doc).expect("documents serialize infallibly");
    let mut s = serde_json::to_string_pretty(&value).expect("values serialize infallibly");
    s.push('\n');
    s
}

pub fn write_records<T: Serialize>(records: &[T], path: &Path) -> Result<(), LogError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for r in records {
        w.write_all(to_canonical_line(r).as_bytes()).map_err(io_err(path))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn parse_records<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, LogError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| LogError::MalformedRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| LogError::MalformedRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, LogError> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_records(BufReader::new(file))
}

fn invariant(line: usize) -> impl FnOnce(ModelError) -> LogError {
    move |e| LogError::InvariantViolation {
        line,
        message: e.to_string(),
    }
}

/// Checks per-record invariants and that positions within every
/// (user, session) run 1, 2, 3, ... in file order.
pub fn check_exposure_log(records: &[ExposureRecord]) -> Result<(), LogError> {
    let mut next_position: HashMap<(&str, u32), u32> = HashMap::new();
    for (idx, rec) in records.iter().enumerate() {
        let line = idx + 1;
        rec.validate().map_err(invariant(line))?;
        let expected = next_position
            .entry((rec.user_id.as_str(), rec.session_index))
            .or_insert(1);
        if rec.position != *expected {
            return Err(LogError::InvariantViolation {
                line,
                message: format!(
                    "position {} in session {} of user {}; expected {}",
                    rec.position, rec.session_index, rec.user_id, expected
                ),
            });
        }
        *expected += 1;
    }
    Ok(())
}

pub fn parse_exposure_log(reader: impl BufRead) -> Result<Vec<ExposureRecord>, LogError> {
    let records = parse_records(reader)?;
    check_exposure_log(&records)?;
    Ok(records)
}

pub fn read_exposure_log(path: &Path) -> Result<Vec<ExposureRecord>, LogError> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_exposure_log(BufReader::new(file))
}

pub fn write_exposure_log(records: &[ExposureRecord], path: &Path) -> Result<(), LogError> {
    check_exposure_log(records)?;
    write_records(records, path)
}

pub fn read_classifications(path: &Path) -> Result<Vec<ClassificationResult>, LogError> {
    let records: Vec<ClassificationResult> = read_records(path)?;
    for (idx, r) in records.iter().enumerate() {
        r.validate().map_err(invariant(idx + 1))?;
    }
    Ok(records)
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, LogError> {
    let records: Vec<AnnotationRecord> = read_records(path)?;
    for (idx, r) in records.iter().enumerate() {
        r.validate().map_err(invariant(idx + 1))?;
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    pub(crate) fn sample_exposure(user: &str, session: u32, position: u32) -> ExposureRecord {
        ExposureRecord {
            user_id: user.into(),
            session_index: session,
            position,
            sim_time_s: 86400.0 + 12.5 * position as f64,
            engaged: Engagement::skip(),
            video: VideoRecord {
                video_id: format!("v-{user}-{session}-{position}"),
                author: "@creator".into(),
                description: "use code GLOW20 at checkout".into(),
                hashtags: vec!["#makeup".into()],
                transcript: None,
                duration_s: 31.25,
                overlay_label: OverlayLabel::None,
                commercial_indicators: vec![IndicatorKind::DiscountCode],
                frames: Default::default(),
                truth: Some(GroundTruth {
                    true_ad_type: AdType::Undisclosed,
                    true_topic: Topic::Beauty,
                }),
            },
        }
    }

    #[test]
    fn empty_input_gives_empty_log() {
        assert!(parse_exposure_log(&b""[..]).unwrap().is_empty());
    }

    #[test]
    fn one_line_gives_one_record() {
        let line = to_canonical_string(&[sample_exposure("u", 1, 1)]);
        let recs = parse_exposure_log(line.as_bytes()).unwrap();
        assert_eq!(recs, vec![sample_exposure("u", 1, 1)]);
    }

    #[test]
    fn keys_are_sorted() {
        let line = to_canonical_line(&sample_exposure("u", 1, 1));
        let engaged = line.find("\"engaged\"").unwrap();
        let position = line.find("\"position\"").unwrap();
        let user = line.find("\"user_id\"").unwrap();
        assert!(engaged < position && position < user);
        assert!(line.find("\"author\"").unwrap() < line.find("\"video_id\"").unwrap());
    }

    #[test]
    fn missing_field_reports_line_and_field() {
        let mut text = to_canonical_string(&[sample_exposure("u", 1, 1)]);
        text.push_str("{\"user_id\":\"u\"}\n");
        match parse_exposure_log(text.as_bytes()) {
            Err(LogError::MalformedRecord { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("engaged") || message.contains("session_index"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn frames_must_have_three_entries() {
        let text = to_canonical_line(&sample_exposure("u", 1, 1)).replacen(
            "\"frames\":[{",
            "\"frames\":[{\"overlay_text\":null,\"visible_text\":[]},{",
            1,
        );
        assert!(matches!(
            parse_exposure_log(text.as_bytes()),
            Err(LogError::MalformedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn position_gap_is_an_invariant_violation() {
        let text = to_canonical_string(&[sample_exposure("u", 1, 1), sample_exposure("u", 1, 3)]);
        assert!(matches!(
            parse_exposure_log(text.as_bytes()),
            Err(LogError::InvariantViolation { line: 2, .. })
        ));
    }

    #[test]
    fn incoherent_engagement_is_an_invariant_violation() {
        let mut rec = sample_exposure("u", 1, 1);
        rec.engaged.liked = true;
        let text = to_canonical_line(&rec);
        assert!(matches!(
            parse_exposure_log(text.as_bytes()),
            Err(LogError::InvariantViolation { line: 1, .. })
        ));
    }

    #[test]
    fn concatenated_session_logs_keep_record_content() {
        let a = vec![sample_exposure("u", 1, 1), sample_exposure("u", 1, 2)];
        let b = vec![sample_exposure("u", 2, 1)];
        let joined = to_canonical_string(&a) + &to_canonical_string(&b);
        let recs = parse_exposure_log(joined.as_bytes()).unwrap();
        assert_eq!(recs[..2], a[..]);
        assert_eq!(recs[2..], b[..]);
    }

    #[test]
    fn write_then_read_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let recs = vec![sample_exposure("u", 1, 1), sample_exposure("u", 1, 2), sample_exposure("w", 1, 1)];
        write_exposure_log(&recs, &path).unwrap();
        assert_eq!(read_exposure_log(&path).unwrap(), recs);
    }
}
