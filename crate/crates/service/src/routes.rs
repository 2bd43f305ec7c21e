//! HTTP routes.

use std::path::Path as FsPath;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use caaf_core::SessionTranscript;

use crate::api::{CreateSession, DatasetInfo, Health, SessionView, SubmitLabels};
use crate::error::ApiError;
use crate::store::Store;

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/healthz", get(health))
        .route("/datasets", get(datasets))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/labels", post(submit_labels))
        .route("/sessions/{id}/transcript", get(transcript))
        .route("/thumbnails/{dataset}/{id}", get(thumbnail))
        .with_state(store)
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::BadRequest(e.body_text()))
}

/// Runs CPU-bound session work off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))?
}

async fn health(State(store): State<Arc<Store>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        sessions: store.session_count(),
        datasets: store.datasets().len(),
    })
}

async fn datasets(State(store): State<Arc<Store>>) -> Json<Vec<DatasetInfo>> {
    Json(store.datasets())
}

async fn create_session(
    State(store): State<Arc<Store>>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> Result<Json<SessionView>, ApiError> {
    let request = body(payload)?;
    blocking(move || store.create(request)).await.map(Json)
}

async fn get_session(State(store): State<Arc<Store>>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    store.view(&id).map(Json)
}

async fn submit_labels(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    payload: Result<Json<SubmitLabels>, JsonRejection>,
) -> Result<Json<SessionView>, ApiError> {
    let request = body(payload)?;
    blocking(move || store.submit(&id, request)).await.map(Json)
}

async fn transcript(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
) -> Result<Json<SessionTranscript>, ApiError> {
    store.transcript(&id).map(Json)
}

fn content_type(path: &str) -> &'static str {
    match FsPath::new(path)
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

fn placeholder(id: &str) -> String {
    let text: String = id
        .chars()
        .map(|c| match c {
            '<' => "&lt;".to_string(),
            '>' => "&gt;".to_string(),
            '&' => "&amp;".to_string(),
            '"' => "&quot;".to_string(),
            c => c.to_string(),
        })
        .collect();
    format!(
        concat!(
            r##"<svg xmlns="http://www.w3.org/2000/svg" width="128" height="128" viewBox="0 0 128 128">"##,
            r##"<rect width="128" height="128" fill="#d9d9d9"/>"##,
            r##"<text x="64" y="68" font-family="sans-serif" font-size="11" text-anchor="middle" fill="#333">{}</text>"##,
            "</svg>"
        ),
        text
    )
}

/// Serves the sample's thumbnail file, or an SVG tile with its id when the
/// dataset has none.
async fn thumbnail(
    State(store): State<Arc<Store>>,
    Path((dataset, id)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let ds = store
        .dataset(&dataset)
        .ok_or_else(|| ApiError::UnknownDataset(dataset.clone()))?;
    let path = match (ds.gallery.index_of(&id), ds.probes.index_of(&id)) {
        (Some(i), _) => ds.gallery.thumbnail(i),
        (None, Some(i)) => ds.probes.thumbnail(i),
        (None, None) => return Err(ApiError::UnknownSample(id)),
    };
    if let Some(path) = path {
        match tokio::fs::read(path).await {
            Ok(bytes) => return Ok(([(header::CONTENT_TYPE, content_type(path))], bytes).into_response()),
            Err(e) => log::warn!("thumbnail {path}: {e}; serving placeholder"),
        }
    }
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], placeholder(&id)).into_response())
}
