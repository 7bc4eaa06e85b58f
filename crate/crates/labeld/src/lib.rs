//! Local HTTP service for reviewing cluster labels.
//!
//! Reads share one in-memory dataset; edits are serialised through a single
//! writer, journalled before they are applied, and replayed on restart.

mod edit;
mod journal;
mod render;
mod review;

pub use edit::{EditKind, LabelEdit, Target};
pub use journal::Journal;
pub use render::{colour, spectrogram_png, UPSCALE};
pub use review::Review;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;
use tokio::net::TcpListener;
use vocalis::{Error, ProjectDirs};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;
const EXEMPLARS: usize = 5;

pub type Shared = Arc<RwLock<Review>>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            code: "not_found",
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::Validation(_) | Error::Range(_) | Error::InsufficientData(_) => {
                (StatusCode::BAD_REQUEST, "validation")
            }
            Error::State(_) | Error::Conflict { .. } => (StatusCode::CONFLICT, "state"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError {
            status,
            code,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn read(state: &Shared) -> std::sync::RwLockReadGuard<'_, Review> {
    state.read().unwrap_or_else(|p| p.into_inner())
}

/// Runs a writer on the blocking pool with the write lock held.
async fn write<T, F>(state: &Shared, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut Review) -> vocalis::Result<T> + Send + 'static,
{
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let mut guard = state.write().unwrap_or_else(|p| p.into_inner());
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        code: "internal",
        message: e.to_string(),
    })?
    .map_err(ApiError::from)
}

#[derive(Serialize)]
struct IndividualView {
    id: String,
    song_count: usize,
    cluster_count: usize,
    noise_count: usize,
}

#[derive(Serialize)]
struct ClusterView {
    label: i32,
    size: usize,
    exemplar_song_ids: Vec<String>,
}

#[derive(Serialize)]
struct ItemView {
    song_id: String,
    unit_count: usize,
    label_source: vocalis::LabelSource,
}

#[derive(Serialize)]
struct Page {
    page: usize,
    page_size: usize,
    total: usize,
    items: Vec<ItemView>,
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "version": VERSION }))
}

async fn individuals(State(state): State<Shared>) -> Json<Vec<IndividualView>> {
    let review = read(&state);
    let mut by_ind: BTreeMap<&str, (usize, std::collections::BTreeSet<i32>, usize)> = BTreeMap::new();
    for r in &review.dataset().records {
        let e = by_ind.entry(r.meta.individual_id.as_str()).or_default();
        e.0 += 1;
        match r.cluster_label {
            Some(-1) => e.2 += 1,
            Some(l) => {
                e.1.insert(l);
            }
            None => {}
        }
    }
    Json(
        by_ind
            .into_iter()
            .map(|(id, (songs, labels, noise))| IndividualView {
                id: id.to_string(),
                song_count: songs,
                cluster_count: labels.len(),
                noise_count: noise,
            })
            .collect(),
    )
}

async fn clusters(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Vec<ClusterView>>> {
    let review = read(&state);
    let ds = review.dataset();
    if !ds.records.iter().any(|r| r.meta.individual_id == id) {
        return Err(ApiError::not_found(format!("individual `{id}`")));
    }
    let mut by_label: BTreeMap<i32, Vec<&str>> = BTreeMap::new();
    for r in ds.records.iter().filter(|r| r.meta.individual_id == id) {
        if let Some(l) = r.cluster_label {
            by_label.entry(l).or_default().push(r.id());
        }
    }
    Ok(Json(
        by_label
            .into_iter()
            .map(|(label, ids)| ClusterView {
                label,
                size: ids.len(),
                exemplar_song_ids: ids.iter().take(EXEMPLARS).map(|s| s.to_string()).collect(),
            })
            .collect(),
    ))
}

fn parse_param(q: &HashMap<String, String>, key: &str, default: usize) -> ApiResult<usize> {
    match q.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| ApiError::bad_request(format!("`{key}` must be a non-negative integer, got `{v}`"))),
    }
}

async fn items(
    State(state): State<Shared>,
    Path((id, label)): Path<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Json<Page>> {
    let label: i32 = label
        .parse()
        .map_err(|_| ApiError::bad_request(format!("label must be an integer, got `{label}`")))?;
    let page = parse_param(&q, "page", 1)?;
    let page_size = parse_param(&q, "page_size", DEFAULT_PAGE_SIZE)?;
    if page == 0 || page_size == 0 || page_size > MAX_PAGE_SIZE {
        return Err(ApiError::bad_request(format!(
            "page must be >= 1 and page_size in 1..={MAX_PAGE_SIZE}"
        )));
    }
    let review = read(&state);
    let members: Vec<_> = review
        .dataset()
        .records
        .iter()
        .filter(|r| r.meta.individual_id == id && r.cluster_label == Some(label))
        .collect();
    if members.is_empty() {
        return Err(ApiError::not_found(format!("cluster {label} of individual `{id}`")));
    }
    let items = members
        .iter()
        .skip((page - 1) * page_size)
        .take(page_size)
        .map(|r| ItemView {
            song_id: r.id().to_string(),
            unit_count: r.unit_count(),
            label_source: r.label_source,
        })
        .collect();
    Ok(Json(Page {
        page,
        page_size,
        total: members.len(),
        items,
    }))
}

async fn spectrogram(State(state): State<Shared>, Path(file): Path<String>) -> ApiResult<Response> {
    let id = file
        .strip_suffix(".png")
        .ok_or_else(|| ApiError::not_found(format!("`{file}` is not a .png resource")))?
        .to_string();
    let state = state.clone();
    let bytes = tokio::task::spawn_blocking(move || {
        let review = read(&state);
        let ds = review.dataset();
        let m = ds.song_spectrogram(&id)?;
        Ok::<_, Error>(spectrogram_png(&m, -(ds.manifest.parameters.top_db as f32)))
    })
    .await
    .map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        code: "internal",
        message: e.to_string(),
    })??;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn post_edit(State(state): State<Shared>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let edit: LabelEdit =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid edit: {e}")))?;
    let index = write(&state, move |r| r.apply(edit)).await?;
    Ok(Json(json!({ "applied": true, "journal_index": index })))
}

async fn post_export(State(state): State<Shared>) -> ApiResult<Json<serde_json::Value>> {
    let version = write(&state, |r| r.export()).await?;
    Ok(Json(json!({ "snapshot_version": version })))
}

async fn index() -> Html<&'static str> {
    Html(concat!(
        "<!doctype html><title>vocalis review</title>",
        "<h1>vocalis review service</h1><p>The JSON API is under <code>/api/</code>.</p>"
    ))
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/api/health", get(health))
        .route("/api/individuals", get(individuals))
        .route("/api/individuals/{id}/clusters", get(clusters))
        .route("/api/clusters/{individual}/{label}/items", get(items))
        .route("/api/spectrogram/{file}", get(spectrogram))
        .route("/api/edits", post(post_edit))
        .route("/api/export", post(post_export))
        .fallback(fallback)
        .with_state(state)
}

/// Opens the project's clustered dataset and replays its journal.
pub fn open(dirs: &ProjectDirs) -> vocalis::Result<Shared> {
    Ok(Arc::new(RwLock::new(Review::open(dirs)?)))
}

/// Binds `addr`; an occupied port is reported by address.
pub async fn bind(addr: SocketAddr) -> vocalis::Result<TcpListener> {
    TcpListener::bind(addr).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            Error::Validation(format!("port {} is already in use on {}", addr.port(), addr.ip()))
        } else {
            Error::Io {
                path: addr.to_string().into(),
                source: e,
            }
        }
    })
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: Shared,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
