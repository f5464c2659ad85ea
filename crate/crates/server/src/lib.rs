//! HTTP front end for an annotation campaign.
//!
//! | route | |
//! |---|---|
//! | `GET /api/task?annotator=T` | pending task, or `{"status":"done"}` |
//! | `POST /api/labels` | commit four labels; 200, 409 on a repeat, 400 otherwise |
//! | `GET /api/progress[?annotator=T]` | counts and mean time per group |
//! | `GET /img/{patch_id}` | PNG bytes of one patch |
//!
//! All campaign state sits behind one mutex; the record sink is written while
//! it is held, so batches land in the log in commit order.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gtcurate_core::annoservice::{AnnotationError, Campaign, Label, RecordSink, Task};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milliseconds stamped into `submitted_at_ms`.
pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    })
}

pub struct AppState<S: RecordSink> {
    campaign: Mutex<Campaign<S>>,
    clock: Clock,
}

impl<S: RecordSink> AppState<S> {
    pub fn new(campaign: Campaign<S>, clock: Clock) -> Arc<Self> {
        Arc::new(Self {
            campaign: Mutex::new(campaign),
            clock,
        })
    }

    /// Runs `f` with the campaign locked.
    pub fn with_campaign<R>(&self, f: impl FnOnce(&mut Campaign<S>) -> R) -> R {
        let mut guard = self.campaign.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut guard)
    }
}

pub fn router<S: RecordSink + 'static>(state: Arc<AppState<S>>) -> Router {
    Router::new()
        .route("/api/task", get(get_task::<S>))
        .route("/api/labels", post(post_labels::<S>))
        .route("/api/progress", get(get_progress::<S>))
        .route("/img/{patch_id}", get(get_image::<S>))
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve<S: RecordSink + 'static>(state: Arc<AppState<S>>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<gtcurate_core::Error> for ApiError {
    fn from(e: gtcurate_core::Error) -> Self {
        match e {
            gtcurate_core::Error::Annotation(a) => ApiError::Annotation(a),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::Annotation(AnnotationError::Duplicate { .. }) => StatusCode::CONFLICT,
            ApiError::Annotation(_) | ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}

#[derive(Debug, Deserialize)]
pub struct AnnotatorQuery {
    pub annotator: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub patch_id: String,
    pub url: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotView {
    pub slot: usize,
    pub variant_id: u8,
    pub patch_id: String,
    pub url: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TaskResponse {
    Task {
        group_id: String,
        original: ImageRef,
        variants: Vec<SlotView>,
        display_order: [u8; 4],
    },
    Done,
}

fn img_url(patch_id: &str) -> String {
    format!("/img/{patch_id}")
}

impl From<Task> for TaskResponse {
    fn from(t: Task) -> Self {
        TaskResponse::Task {
            original: ImageRef {
                url: img_url(&t.original_patch_id),
                patch_id: t.original_patch_id,
            },
            variants: t
                .variants
                .into_iter()
                .map(|v| SlotView {
                    slot: v.slot,
                    variant_id: v.variant_id,
                    url: img_url(&v.patch_id),
                    patch_id: v.patch_id,
                })
                .collect(),
            display_order: t.display_order,
            group_id: t.group_id,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub variant_id: u8,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub annotator: String,
    pub group: String,
    pub labels: Vec<LabelEntry>,
    pub elapsed_ms: u64,
}

fn require_annotator(q: AnnotatorQuery) -> Result<String, ApiError> {
    q.annotator
        .filter(|a| !a.is_empty())
        .ok_or_else(|| ApiError::BadRequest("missing annotator".into()))
}

async fn get_task<S: RecordSink + 'static>(
    State(state): State<Arc<AppState<S>>>,
    Query(q): Query<AnnotatorQuery>,
) -> Result<Json<TaskResponse>, ApiError> {
    let annotator = require_annotator(q)?;
    let task = state.with_campaign(|c| c.next_task(&annotator))?;
    Ok(Json(task.map_or(TaskResponse::Done, TaskResponse::from)))
}

async fn post_labels<S: RecordSink + 'static>(
    State(state): State<Arc<AppState<S>>>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let sub: LabelSubmission =
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("body: {e}")))?;
    let labels: Vec<(u8, Label)> = sub.labels.iter().map(|l| (l.variant_id, l.label)).collect();
    let now = (state.clock)();
    let ack = state.with_campaign(|c| c.submit_labels(&sub.annotator, &sub.group, &labels, sub.elapsed_ms, now))?;
    Ok(Json(ack).into_response())
}

async fn get_progress<S: RecordSink + 'static>(
    State(state): State<Arc<AppState<S>>>,
    Query(q): Query<AnnotatorQuery>,
) -> Result<Response, ApiError> {
    let progress = state.with_campaign(|c| c.progress(q.annotator.as_deref()))?;
    Ok(Json(progress).into_response())
}

async fn get_image<S: RecordSink + 'static>(
    State(state): State<Arc<AppState<S>>>,
    Path(patch_id): Path<String>,
) -> Result<Response, ApiError> {
    let path = state
        .with_campaign(|c| c.patch_path(&patch_id).map(|p| p.to_path_buf()))
        .ok_or_else(|| ApiError::NotFound(patch_id.clone()))?;
    let bytes = tokio::task::spawn_blocking(move || std::fs::read(&path))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(|e| ApiError::NotFound(format!("{patch_id}: {e}")))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}
