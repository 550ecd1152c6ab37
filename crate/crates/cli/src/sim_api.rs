//! HTTP front for the simulated platform, so agents can run out of process.

use std::sync::Arc;

use audit_core::model::{Engagement, Topic};
use audit_core::sim::{FeedItem, FeedService, OpenSession, SimError, Simulator};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

pub fn router(sim: Arc<Simulator>) -> Router {
    Router::new()
        .route("/session/open", post(open))
        .route("/feed/next", get(feed_next))
        .route("/search/next", get(search_next))
        .route("/engage", post(engage))
        .route("/session/close", post(close))
        .with_state(sim)
}

fn status_of(e: &SimError) -> StatusCode {
    match e {
        SimError::UnknownUser(_) | SimError::UnknownVideoForUser { .. } => StatusCode::NOT_FOUND,
        SimError::SessionClosed(_)
        | SimError::SessionAlreadyOpen(_)
        | SimError::ProfileMismatch { .. }
        | SimError::EngagementConflict { .. }
        | SimError::WrongPhase(_) => StatusCode::CONFLICT,
        SimError::InvalidEngagement(_) | SimError::InvalidRequest(_) => StatusCode::UNPROCESSABLE_ENTITY,
        SimError::ServiceUnreachable(_) => StatusCode::BAD_GATEWAY,
    }
}

fn reply<T: serde::Serialize>(result: Result<T, SimError>) -> Response {
    match result {
        Ok(v) => Json(v).into_response(),
        Err(e) => (status_of(&e), Json(json!({ "error": e.to_string() }))).into_response(),
    }
}

/// Ground truth is stripped unless the caller asks for it with `truth=1`.
fn strip(item: FeedItem, truth: Option<u8>) -> FeedItem {
    if truth == Some(1) {
        item
    } else {
        FeedItem {
            video: item.video.without_truth(),
            ..item
        }
    }
}

async fn open(State(sim): State<Arc<Simulator>>, Json(req): Json<OpenSession>) -> Response {
    reply(sim.open_session(req))
}

#[derive(Deserialize)]
struct FeedQuery {
    user: String,
    truth: Option<u8>,
}

async fn feed_next(State(sim): State<Arc<Simulator>>, Query(q): Query<FeedQuery>) -> Response {
    reply(sim.next_feed_item(&q.user).map(|i| strip(i, q.truth)))
}

#[derive(Deserialize)]
struct SearchQuery {
    user: String,
    query: String,
    topic: Topic,
    truth: Option<u8>,
}

async fn search_next(State(sim): State<Arc<Simulator>>, Query(q): Query<SearchQuery>) -> Response {
    reply(sim.next_search_result(&q.user, &q.query, q.topic).map(|i| strip(i, q.truth)))
}

#[derive(Deserialize)]
struct EngageBody {
    user_id: String,
    video_id: String,
    engagement: Engagement,
}

async fn engage(State(sim): State<Arc<Simulator>>, Json(b): Json<EngageBody>) -> Response {
    match sim.record_engagement(&b.user_id, &b.video_id, b.engagement) {
        Ok(()) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => reply::<()>(Err(e)),
    }
}

#[derive(Deserialize)]
struct CloseBody {
    user_id: String,
}

async fn close(State(sim): State<Arc<Simulator>>, Json(b): Json<CloseBody>) -> Response {
    reply(sim.close_session(&b.user_id))
}
