//! HTTP API behind the annotation tool.
//!
//! Reads are served from an in-memory copy of the run; annotation writes
//! are serialized through one lock and persisted to
//! `annotations/{annotator}.jsonl` before the response goes out.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use audit_core::jsonl::{read_annotations, to_canonical_string};
use audit_core::model::{AdType, AnnotationRecord, ClassificationResult, Topic, VideoRecord};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::commands::load_run;
use crate::error::CliError;
use crate::layout::{self, write_file, RunDir};

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;

#[derive(Debug, Clone)]
struct VideoEntry {
    user_id: String,
    session_index: u32,
    position: u32,
    video: VideoRecord,
}

struct Store {
    dir: RunDir,
    /// Feed order: user, session, position.
    order: Vec<String>,
    videos: BTreeMap<String, VideoEntry>,
    predictions: BTreeMap<String, ClassificationResult>,
    /// Annotator → video id → record.
    annotations: Mutex<BTreeMap<String, BTreeMap<String, AnnotationRecord>>>,
}

#[derive(Clone)]
pub struct ApiState(Arc<Store>);

impl ApiState {
    /// Loads a run directory. Classifications and annotations are optional.
    pub fn load(run_dir: &Path) -> Result<ApiState, CliError> {
        let run = load_run(run_dir)?;
        let predictions = if run.dir.path(layout::CLASSIFICATIONS).exists() {
            run.classifications()?.into_iter().map(|c| (c.video_id.clone(), c)).collect()
        } else {
            BTreeMap::new()
        };
        let mut exposures = run.exposures;
        exposures.sort_by(|a, b| {
            (&a.user_id, a.session_index, a.position).cmp(&(&b.user_id, b.session_index, b.position))
        });
        let mut order = Vec::new();
        let mut videos = BTreeMap::new();
        for e in exposures {
            let id = e.video.video_id.clone();
            if videos.contains_key(&id) {
                continue;
            }
            order.push(id.clone());
            videos.insert(
                id,
                VideoEntry {
                    user_id: e.user_id,
                    session_index: e.session_index,
                    position: e.position,
                    video: e.video.without_truth(),
                },
            );
        }
        let mut annotations: BTreeMap<String, BTreeMap<String, AnnotationRecord>> = BTreeMap::new();
        let ann_dir = run.dir.path(layout::ANNOTATIONS);
        if ann_dir.is_dir() {
            let mut paths: Vec<_> = std::fs::read_dir(&ann_dir)
                .map_err(|e| CliError::io(&ann_dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            paths.sort();
            for p in paths {
                let records = read_annotations(&p).map_err(|source| CliError::Log {
                    path: p.display().to_string(),
                    source,
                })?;
                for r in records {
                    annotations
                        .entry(r.annotator_id.clone())
                        .or_default()
                        .insert(r.video_id.clone(), r);
                }
            }
        }
        Ok(ApiState(Arc::new(Store {
            dir: run.dir,
            order,
            videos,
            predictions,
            annotations: Mutex::new(annotations),
        })))
    }
}

pub fn router(state: ApiState) -> Router {
    Router::new()
        .route("/api/videos", get(list_videos))
        .route("/api/videos/{id}", get(video_detail))
        .route("/api/annotations", post(post_annotation))
        .route("/api/annotations/export", get(export_annotations))
        .route("/api/metrics/summary", get(metrics_summary))
        .with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

#[derive(Debug, Deserialize, Default)]
pub struct ListQuery {
    pub ad_type: Option<String>,
    pub ad_topic: Option<String>,
    pub user: Option<String>,
    pub page: Option<usize>,
    pub page_size: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Predicted {
    pub ad_type: AdType,
    pub ad_topic: Option<Topic>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VideoSummary {
    pub video_id: String,
    pub user_id: String,
    pub session_index: u32,
    pub position: u32,
    pub author: String,
    pub description: String,
    pub duration_s: f64,
    /// Visible text of the first frame.
    pub thumbnail_text: Vec<String>,
    pub predicted: Option<Predicted>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VideoPage {
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub items: Vec<VideoSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VideoDetail {
    pub user_id: String,
    pub session_index: u32,
    pub position: u32,
    pub video: VideoRecord,
    pub classification: Option<ClassificationResult>,
    pub annotations: Vec<AnnotationRecord>,
}

fn parse_label<T: for<'de> Deserialize<'de>>(name: &str, value: &str) -> Result<T, Response> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| error(StatusCode::BAD_REQUEST, format!("unknown {name} `{value}`")))
}

async fn list_videos(State(state): State<ApiState>, Query(q): Query<ListQuery>) -> Response {
    let store = &state.0;
    let ad_type: Option<AdType> = match q.ad_type.as_deref().filter(|s| !s.is_empty()) {
        Some(v) => match parse_label("ad_type", v) {
            Ok(t) => Some(t),
            Err(r) => return r,
        },
        None => None,
    };
    // "none" selects videos without an ad topic.
    let ad_topic: Option<Option<Topic>> = match q.ad_topic.as_deref().filter(|s| !s.is_empty()) {
        Some("none") => Some(None),
        Some(v) => match parse_label("ad_topic", v) {
            Ok(t) => Some(Some(t)),
            Err(r) => return r,
        },
        None => None,
    };
    let page = q.page.unwrap_or(1);
    let page_size = q.page_size.unwrap_or(DEFAULT_PAGE_SIZE);
    if page == 0 || page_size == 0 || page_size > MAX_PAGE_SIZE {
        return error(
            StatusCode::BAD_REQUEST,
            format!("page starts at 1 and page_size must be in 1..={MAX_PAGE_SIZE}"),
        );
    }
    let matching: Vec<VideoSummary> = store
        .order
        .iter()
        .filter_map(|id| {
            let entry = &store.videos[id];
            let predicted = store.predictions.get(id).map(|c| Predicted {
                ad_type: c.ad_type,
                ad_topic: c.ad_topic,
            });
            if q.user.as_deref().is_some_and(|u| !u.is_empty() && u != entry.user_id) {
                return None;
            }
            if ad_type.is_some() && predicted.as_ref().map(|p| p.ad_type) != ad_type {
                return None;
            }
            if let Some(topic) = ad_topic {
                if predicted.as_ref().map(|p| p.ad_topic) != Some(topic) {
                    return None;
                }
            }
            Some(VideoSummary {
                video_id: id.clone(),
                user_id: entry.user_id.clone(),
                session_index: entry.session_index,
                position: entry.position,
                author: entry.video.author.clone(),
                description: entry.video.description.clone(),
                duration_s: entry.video.duration_s,
                thumbnail_text: entry.video.frames[0].visible_text.clone(),
                predicted,
            })
        })
        .collect();
    let total = matching.len();
    let items = matching.into_iter().skip((page - 1) * page_size).take(page_size).collect();
    Json(VideoPage {
        page,
        page_size,
        total,
        items,
    })
    .into_response()
}

async fn video_detail(State(state): State<ApiState>, UrlPath(id): UrlPath<String>) -> Response {
    let store = &state.0;
    let Some(entry) = store.videos.get(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown video `{id}`"));
    };
    let annotations = store
        .annotations
        .lock()
        .expect("annotation lock")
        .values()
        .filter_map(|m| m.get(&id).cloned())
        .collect();
    Json(VideoDetail {
        user_id: entry.user_id.clone(),
        session_index: entry.session_index,
        position: entry.position,
        video: entry.video.clone(),
        classification: store.predictions.get(&id).cloned(),
        annotations,
    })
    .into_response()
}

fn valid_annotator(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// 201 for a new label, 200 when the annotator relabels a video.
async fn post_annotation(State(state): State<ApiState>, body: axum::body::Bytes) -> Response {
    let store = &state.0;
    let record: AnnotationRecord = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    if !valid_annotator(&record.annotator_id) {
        return error(
            StatusCode::BAD_REQUEST,
            "annotator_id must be 1-64 characters of letters, digits, '_' or '-'",
        );
    }
    if let Err(e) = record.validate() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string());
    }
    if !store.videos.contains_key(&record.video_id) {
        return error(StatusCode::NOT_FOUND, format!("unknown video `{}`", record.video_id));
    }
    let mut all = store.annotations.lock().expect("annotation lock");
    let mine = all.entry(record.annotator_id.clone()).or_default();
    let previous = mine.insert(record.video_id.clone(), record.clone());
    let records: Vec<&AnnotationRecord> = mine.values().collect();
    let path = store.dir.path(&RunDir::annotation_file(&record.annotator_id));
    if let Err(e) = write_file(&path, to_canonical_string(&records).as_bytes()) {
        match previous {
            Some(p) => mine.insert(p.video_id.clone(), p),
            None => mine.remove(&record.video_id),
        };
        return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
    }
    let status = if previous.is_some() { StatusCode::OK } else { StatusCode::CREATED };
    (status, Json(record)).into_response()
}

#[derive(Debug, Deserialize)]
pub struct ExportQuery {
    pub annotator: Option<String>,
}

/// The annotator's labels as line-delimited JSON, ordered by video id.
async fn export_annotations(State(state): State<ApiState>, Query(q): Query<ExportQuery>) -> Response {
    let Some(annotator) = q.annotator.filter(|a| !a.is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "query parameter `annotator` is required");
    };
    let all = state.0.annotations.lock().expect("annotation lock");
    let records: Vec<&AnnotationRecord> = all.get(&annotator).map(|m| m.values().collect()).unwrap_or_default();
    (
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        to_canonical_string(&records),
    )
        .into_response()
}

async fn metrics_summary(State(state): State<ApiState>) -> Response {
    let path = state.0.dir.path(&format!("{}/report.json", layout::REPORT));
    match std::fs::read_to_string(&path) {
        Ok(text) => ([(header::CONTENT_TYPE, "application/json")], text).into_response(),
        Err(_) => error(StatusCode::NOT_FOUND, "no report yet; run `audit report` first"),
    }
}
