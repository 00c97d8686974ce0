//! HTTP/JSON front end to the previs pipeline.
//!
//! Endpoints:
//!
//! | method | path | body / query | response |
//! |---|---|---|---|
//! | POST | `/meshes` | `{nx, ny, width, height}` | mesh artifact |
//! | POST | `/ensembles` | `{mesh_id, design, seed, generator}` | ensemble artifact |
//! | POST | `/bases` | `{ensemble_id, k}` | basis artifact and variance ratios |
//! | POST | `/models/train` | `{ensemble_id, kind, seed, optimizer, ...}` | `202`, reserved model id |
//! | GET | `/models/{id}` | | model metadata or job state |
//! | GET | `/models/{id}/progress` | | epoch, loss history, state |
//! | POST | `/interpolate` | `{basis_id, params}` | `field` values, `elapsed_ms` |
//! | POST | `/compare` | `{model_ids, test_ensemble_id, basis_id?}` | report and impact field ids |
//! | GET | `/fields/{id}` | `?format=bin` for raw little-endian `f64` | field values |
//! | GET | `/artifacts` | `?kind=` | store index |

mod error;
mod jobs;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use previs_core::ensemble::ParameterVector;
use previs_core::interpolation::ImpactField;
use previs_core::pipeline::{self, BasisRequest, CompareRequest, EnsembleRequest, MeshRequest, TrainRequest};
use previs_core::reduction::PcaBasis;
use previs_core::store::{ArtifactKind, ArtifactStore, BasisRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use error::{ApiError, ApiResult};
pub use jobs::{JobState, JobStatus, TrainingQueue};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LastInterpolation {
    pub basis_id: String,
    pub params: Vec<f64>,
    pub elapsed_ms: f64,
}

/// Most recently touched artifacts.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SessionState {
    pub active_mesh: Option<String>,
    pub active_basis: Option<String>,
    pub active_model: Option<String>,
    pub last_interpolation: Option<LastInterpolation>,
}

pub struct AppState {
    pub store: Arc<ArtifactStore>,
    pub trainer: TrainingQueue,
    bases: RwLock<HashMap<String, Arc<PcaBasis>>>,
    session: Mutex<SessionState>,
}

impl AppState {
    pub fn open(root: impl Into<PathBuf>) -> previs_core::Result<Arc<Self>> {
        let store = Arc::new(ArtifactStore::open(root)?);
        Ok(Arc::new(Self {
            trainer: TrainingQueue::start(store.clone()),
            store,
            bases: RwLock::default(),
            session: Mutex::default(),
        }))
    }

    pub fn session(&self) -> SessionState {
        self.session.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn touch(&self, f: impl FnOnce(&mut SessionState)) {
        f(&mut self.session.lock().unwrap_or_else(|e| e.into_inner()));
    }

    /// Stored bases are immutable, so each is loaded once.
    fn basis(&self, id: &str) -> ApiResult<Arc<PcaBasis>> {
        if let Some(b) = self.bases.read().unwrap_or_else(|e| e.into_inner()).get(id) {
            return Ok(b.clone());
        }
        let record: BasisRecord = self.store.load(id)?;
        let basis = Arc::new(record.basis);
        self.bases
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id.to_string(), basis.clone());
        Ok(basis)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/meshes", post(create_mesh))
        .route("/ensembles", post(create_ensemble))
        .route("/bases", post(create_basis))
        .route("/models/train", post(train_model))
        .route("/models/{id}", get(model_info))
        .route("/models/{id}/progress", get(model_progress))
        .route("/interpolate", post(interpolate))
        .route("/compare", post(compare))
        .route("/fields/{id}", get(field))
        .route("/artifacts", get(artifacts))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let bytes: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::from(previs_core::PrevisError::invalid(format!("worker task failed: {e}"))))?
}

async fn create_mesh(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: MeshRequest = parse(&body)?;
    let store = st.store.clone();
    let info = blocking(move || Ok(pipeline::create_plate_mesh(&store, &req)?)).await?;
    st.touch(|s| s.active_mesh = Some(info.id.clone()));
    Ok((StatusCode::CREATED, Json(info)))
}

async fn create_ensemble(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: EnsembleRequest = parse(&body)?;
    let store = st.store.clone();
    let info = blocking(move || Ok(pipeline::create_ensemble(&store, &req)?)).await?;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn create_basis(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: BasisRequest = parse(&body)?;
    let store = st.store.clone();
    let info = blocking(move || Ok(pipeline::create_basis(&store, &req)?)).await?;
    st.touch(|s| s.active_basis = Some(info.id.clone()));
    Ok((StatusCode::CREATED, Json(info)))
}

async fn train_model(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: TrainRequest = parse(&body)?;
    let model_id = st.trainer.submit(req)?;
    st.touch(|s| s.active_model = Some(model_id.clone()));
    let progress = format!("/models/{model_id}/progress");
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "model_id": model_id, "state": JobState::Queued, "progress": progress })),
    ))
}

/// Job state for models trained by this process, else the stored checkpoint.
fn model_status(st: &AppState, id: &str) -> ApiResult<(JobStatus, Option<Value>)> {
    let stored = match st.store.manifest(id) {
        Ok(m) if m.kind == ArtifactKind::Model => Some(m.meta),
        Ok(_) => return Err(ApiError::not_found(format!("{id} is not a model"))),
        Err(previs_core::PrevisError::NotFound(_)) => None,
        Err(e) => return Err(e.into()),
    };
    if let Some(job) = st.trainer.status(id) {
        return Ok((job, stored));
    }
    let meta = stored.ok_or_else(|| ApiError::not_found(id.to_string()))?;
    let losses: Vec<f64> = serde_json::from_value(meta["training_log"].clone()).unwrap_or_default();
    let status = JobStatus {
        model_id: id.to_string(),
        kind: serde_json::from_value(meta["kind"].clone()).map_err(previs_core::PrevisError::from)?,
        state: JobState::Completed,
        epoch: losses.len(),
        epochs: losses.len(),
        loss: losses.last().copied(),
        losses,
        error: None,
        failed_epoch: None,
    };
    Ok((status, Some(meta)))
}

async fn model_info(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let (status, meta) = model_status(&st, &id)?;
    let mut body = json!({
        "model_id": id,
        "kind": status.kind,
        "state": status.state,
        "error": status.error,
    });
    if let Some(meta) = meta {
        for key in ["architecture", "seed", "mesh_id", "mesh_ref", "ensemble_ref", "optimizer", "training_log", "segments"] {
            body[key] = meta[key].clone();
        }
    }
    Ok(Json(body))
}

async fn model_progress(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<JobStatus>> {
    Ok(Json(model_status(&st, &id)?.0))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InterpolateRequest {
    basis_id: String,
    params: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct InterpolateResponse {
    basis_id: String,
    mesh_id: String,
    /// Scalar value per vertex.
    field: Vec<f64>,
    elapsed_ms: f64,
    out_of_bounds: Vec<String>,
    warning: Option<String>,
}

async fn interpolate(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<InterpolateResponse>> {
    let req: InterpolateRequest = parse(&body)?;
    let basis = st.basis(&req.basis_id)?;
    let start = Instant::now();
    let out = pipeline::interpolate_with(&basis, &ParameterVector(req.params.clone()))?;
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let warning = (!out.out_of_bounds.is_empty())
        .then(|| format!("parameters outside their bounds: {}", out.out_of_bounds.join(", ")));
    st.touch(|s| {
        s.active_basis = Some(req.basis_id.clone());
        s.last_interpolation = Some(LastInterpolation {
            basis_id: req.basis_id.clone(),
            params: req.params,
            elapsed_ms,
        });
    });
    Ok(Json(InterpolateResponse {
        basis_id: req.basis_id,
        mesh_id: out.field.mesh_id,
        field: out.field.values,
        elapsed_ms,
        out_of_bounds: out.out_of_bounds,
        warning,
    }))
}

async fn compare(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CompareRequest = parse(&body)?;
    let store = st.store.clone();
    let outcome = blocking(move || Ok(pipeline::compare(&store, &req)?)).await?;
    Ok((StatusCode::CREATED, Json(outcome)))
}

#[derive(Debug, Default, Deserialize)]
struct FieldQuery {
    format: Option<String>,
}

async fn field(State(st): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Query<FieldQuery>) -> ApiResult<Response> {
    if ArtifactStore::kind_of(&id)? != ArtifactKind::Field {
        return Err(ApiError::not_found(format!("{id} is not a field")));
    }
    match q.format.as_deref() {
        None | Some("json") => {
            let f: ImpactField = st.store.load(&id)?;
            Ok(Json(json!({
                "id": id,
                "mesh_id": f.field.mesh_id,
                "values": f.field.values,
                "meta": f.meta,
            }))
            .into_response())
        }
        Some("bin") => {
            let bytes = st.store.blob_bytes(&id, "values")?;
            Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
        }
        Some(other) => Err(ApiError::bad_request(format!("unknown format {other:?}; use json or bin"))),
    }
}

#[derive(Debug, Default, Deserialize)]
struct ArtifactQuery {
    kind: Option<String>,
}

async fn artifacts(State(st): State<Arc<AppState>>, Query(q): Query<ArtifactQuery>) -> ApiResult<Json<Value>> {
    let entries = match q.kind {
        Some(k) => st.store.list_kind(k.parse()?)?,
        None => st.store.list()?,
    };
    Ok(Json(json!({ "artifacts": entries, "session": st.session() })))
}
