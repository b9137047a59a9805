//! HTTP service for annotation sessions.
//!
//! A session holds the detections and point tracks of one video plus the
//! paths and boxes drawn by the annotator. Inference runs the engine on the
//! current session state and stores the trajectories under a revision
//! number. Request and response bodies reuse the JSON Lines record layouts,
//! as JSON arrays.
//!
//! | method | route | |
//! |---|---|---|
//! | POST | `/sessions` | create a session |
//! | GET | `/sessions/{id}` | session summary |
//! | PUT | `/sessions/{id}/paths/{path_id}` | add or replace one path |
//! | DELETE | `/sessions/{id}/paths/{path_id}` | remove a path and its boxes |
//! | PUT | `/sessions/{id}/boxes` | replace all boxes |
//! | POST | `/sessions/{id}/infer` | run inference (`?wait=false` returns at once) |
//! | GET | `/sessions/{id}/trajectories` | latest revision |
//! | GET | `/sessions/{id}/detections?from=&to=` | detections in an inclusive frame range |

pub mod error;
pub mod store;

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use pathsup_core::io::{paths_from_records, BoxRecord, DetectionRecord, PathRecord, TrackRecord, TrajectoryRecord};
use pathsup_core::{Engine, EngineConfig, PathId};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use error::{ApiError, ApiResult};
pub use store::{InferenceMeta, NewSession, Session, Store};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub fps: f64,
    pub n_frames: u32,
    /// Engine settings; `fps` is taken from the session.
    #[serde(default)]
    pub engine: Option<EngineConfig>,
    #[serde(default)]
    pub detections: Vec<DetectionRecord>,
    #[serde(default)]
    pub tracks: Vec<TrackRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub fps: f64,
    pub n_frames: u32,
    pub detections: usize,
    pub tracks: usize,
    pub paths: Vec<PathId>,
    pub boxes: usize,
    pub revision: u64,
    pub running: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PathSummary {
    pub path_id: PathId,
    pub first_frame: u32,
    pub last_frame: u32,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrajectoriesResponse {
    pub revision: u64,
    pub failures: Vec<PathId>,
    pub trajectories: Vec<TrajectoryRecord>,
}

#[derive(Debug, Deserialize)]
pub struct InferQuery {
    #[serde(default)]
    pub wait: Option<bool>,
}

#[derive(Debug, Deserialize)]
pub struct FrameRange {
    pub from: Option<u32>,
    pub to: Option<u32>,
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::Invalid(format!("request body: {e}")))
}

fn parse_path_id(raw: &str) -> ApiResult<PathId> {
    raw.parse()
        .map(PathId)
        .map_err(|_| ApiError::Invalid(format!("path_id {raw:?} is not a non-negative integer")))
}

fn check_frame(what: &str, k: usize, frame: u32, n_frames: u32) -> ApiResult<()> {
    if frame < n_frames {
        Ok(())
    } else {
        Err(ApiError::Invalid(format!(
            "{what}[{k}]: field frame: {frame} is past the last frame {}",
            n_frames - 1
        )))
    }
}

fn summary(session: &Session) -> SessionSummary {
    let st = session.state();
    SessionSummary {
        id: session.id.clone(),
        fps: st.manifest.fps,
        n_frames: st.manifest.n_frames,
        detections: st.detections.len(),
        tracks: st.tracks.len(),
        paths: st.paths.keys().copied().collect(),
        boxes: st.boxes.len(),
        revision: st.manifest.inference.as_ref().map_or(0, |m| m.revision),
        running: session.is_running(),
    }
}

fn validate_new_session(req: CreateSession) -> ApiResult<NewSession> {
    if !(req.fps.is_finite() && req.fps > 0.0) {
        return Err(ApiError::Invalid(format!("field fps: {} must be positive", req.fps)));
    }
    if req.n_frames == 0 {
        return Err(ApiError::Invalid("field n_frames: must be positive".into()));
    }
    let mut engine = req.engine.unwrap_or_default();
    engine.fps = req.fps;
    Engine::new(engine.clone()).map_err(|e| ApiError::Invalid(format!("field engine: {e}")))?;

    let mut ids = BTreeSet::new();
    let mut detections = Vec::with_capacity(req.detections.len());
    for (k, r) in req.detections.iter().enumerate() {
        let d = r
            .to_detection()
            .map_err(|m| ApiError::Invalid(format!("detections[{k}]: {m}")))?;
        check_frame("detections", k, d.frame, req.n_frames)?;
        if !ids.insert(d.id) {
            return Err(ApiError::Invalid(format!(
                "detections[{k}]: field id: duplicate id {}",
                d.id
            )));
        }
        detections.push(d);
    }
    let mut tracks = Vec::with_capacity(req.tracks.len());
    for (k, r) in req.tracks.iter().enumerate() {
        let t = r
            .to_track()
            .map_err(|m| ApiError::Invalid(format!("tracks[{k}]: {m}")))?;
        if t.end_frame() >= req.n_frames {
            return Err(ApiError::Invalid(format!(
                "tracks[{k}]: field points: track ends at frame {}, past the last frame {}",
                t.end_frame(),
                req.n_frames - 1
            )));
        }
        tracks.push(t);
    }
    Ok(NewSession {
        fps: req.fps,
        n_frames: req.n_frames,
        engine,
        detections,
        tracks,
    })
}

async fn create_session(State(store): State<Arc<Store>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let new = validate_new_session(parse_body(&body)?)?;
    let session = tokio::task::spawn_blocking(move || store.create(new))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(summary(&session))))
}

async fn get_session(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Json<SessionSummary>> {
    let session = store.get(&id)?;
    Ok(Json(summary(&session)))
}

async fn put_path(
    State(store): State<Arc<Store>>,
    Path((id, raw_path_id)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<PathSummary>> {
    let session = store.get(&id)?;
    let path_id = parse_path_id(&raw_path_id)?;
    let records: Vec<PathRecord> = parse_body(&body)?;
    if records.is_empty() {
        return Err(ApiError::Invalid(
            "request body: a path needs at least one sample".into(),
        ));
    }
    let n_frames = session.state().manifest.n_frames;
    for (k, r) in records.iter().enumerate() {
        if r.path_id != path_id {
            return Err(ApiError::Invalid(format!(
                "samples[{k}]: field path_id: {} does not match the route's path {path_id}",
                r.path_id
            )));
        }
        check_frame("samples", k, r.frame, n_frames)?;
    }
    let mut paths = paths_from_records(records.into_iter().enumerate()).map_err(|e| match e {
        pathsup_core::Error::Parse { line, message } => ApiError::Invalid(format!("samples[{line}]: {message}")),
        other => other.into(),
    })?;
    let path = paths.pop().expect("all samples share one path id");
    let out = PathSummary {
        path_id,
        first_frame: path.first_frame(),
        last_frame: path.last_frame(),
    };
    session.put_path(path)?;
    Ok(Json(out))
}

async fn delete_path(
    State(store): State<Arc<Store>>,
    Path((id, raw_path_id)): Path<(String, String)>,
) -> ApiResult<StatusCode> {
    let session = store.get(&id)?;
    let path_id = raw_path_id
        .parse()
        .map(PathId)
        .map_err(|_| ApiError::NotFound(format!("path {raw_path_id} not found")))?;
    session.delete_path(path_id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn put_boxes(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SessionSummary>> {
    let session = store.get(&id)?;
    let records: Vec<BoxRecord> = parse_body(&body)?;
    let n_frames = session.state().manifest.n_frames;
    let mut boxes = Vec::with_capacity(records.len());
    for (k, r) in records.iter().enumerate() {
        boxes.push(r.to_box().map_err(|m| ApiError::Invalid(format!("boxes[{k}]: {m}")))?);
        check_frame("boxes", k, r.frame, n_frames)?;
    }
    session.put_boxes(boxes)?;
    Ok(Json(summary(&session)))
}

async fn infer(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Query(query): Query<InferQuery>,
) -> ApiResult<impl IntoResponse> {
    let session = store.get(&id)?;
    let guard = session.try_start()?;
    let worker = Arc::clone(&session);
    let task = tokio::task::spawn_blocking(move || worker.run_inference(&guard));
    if query.wait.unwrap_or(true) {
        let meta = task.await.map_err(|e| ApiError::Internal(e.to_string()))??;
        Ok((StatusCode::OK, Json(serde_json::to_value(meta).expect("serializable"))))
    } else {
        tokio::spawn(async move {
            match task.await {
                Ok(Err(e)) => log::error!("session {}: inference failed: {e}", session.id),
                Err(e) => log::error!("session {}: inference task failed: {e}", session.id),
                Ok(Ok(_)) => {}
            }
        });
        Ok((StatusCode::ACCEPTED, Json(serde_json::json!({ "status": "running" }))))
    }
}

async fn get_trajectories(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
) -> ApiResult<Json<TrajectoriesResponse>> {
    let session = store.get(&id)?;
    let st = session.state();
    let (revision, failures) = st
        .manifest
        .inference
        .as_ref()
        .map_or((0, Vec::new()), |m| (m.revision, m.failures.clone()));
    Ok(Json(TrajectoriesResponse {
        revision,
        failures,
        trajectories: st
            .trajectories
            .iter()
            .flat_map(TrajectoryRecord::from_trajectory)
            .collect(),
    }))
}

async fn get_detections(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Query(range): Query<FrameRange>,
) -> ApiResult<Json<Vec<DetectionRecord>>> {
    let session = store.get(&id)?;
    let from = range.from.unwrap_or(0);
    let to = range.to.unwrap_or(u32::MAX);
    if from > to {
        return Err(ApiError::Invalid(format!("query: from {from} is after to {to}")));
    }
    let st = session.state();
    Ok(Json(
        st.detections
            .iter()
            .filter(|d| (from..=to).contains(&d.frame))
            .map(DetectionRecord::from_detection)
            .collect(),
    ))
}

/// Session creation carries every detection and track of a video.
pub const MAX_BODY_BYTES: usize = 512 * 1024 * 1024;

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/paths/{path_id}", put(put_path).delete(delete_path))
        .route("/sessions/{id}/boxes", put(put_boxes))
        .route("/sessions/{id}/infer", post(infer))
        .route("/sessions/{id}/trajectories", get(get_trajectories))
        .route("/sessions/{id}/detections", get(get_detections))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(store)
}

/// Serves the API on `listener` until the process ends.
pub async fn serve(listener: tokio::net::TcpListener, store: Arc<Store>) -> std::io::Result<()> {
    axum::serve(listener, router(store)).await
}
