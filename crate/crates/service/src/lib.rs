//! Session service over HTTP. Each session runs the recursive generator one
//! phrase at a time; steps within a session are serialized, sessions run in
//! parallel.

mod error;
mod store;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use recshape_core::pipeline::{AblationFlags, ModelSet};
use recshape_core::voxel_shapes::{export_mesh, voxel_coords};
use serde::{Deserialize, Serialize};

pub use error::ServiceError;
pub use store::{
    CachedSamples, SessionRecord, SessionSnapshot, StateSummary, StepResult, StepSummary, Store, CHANGE_TAU,
    DEFAULT_SAMPLES, MAX_SAMPLES,
};

type ApiResult<T> = Result<Json<T>, ServiceError>;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub model_set: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub flags: AblationFlags,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

#[derive(Debug, Deserialize)]
pub struct AddPhrase {
    pub text: String,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

#[derive(Debug, Deserialize)]
pub struct SampleQuery {
    #[serde(default)]
    pub format: Option<String>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VoxelSample {
    #[serde(rename = "ref")]
    pub sample_ref: String,
    /// Occupied voxels as [x, y, z].
    pub occupied: Vec<[u16; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MeshSample {
    #[serde(rename = "ref")]
    pub sample_ref: String,
    pub obj: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum SamplePayload {
    Voxels {
        step: usize,
        seed: u64,
        resolution: usize,
        samples: Vec<VoxelSample>,
    },
    Mesh {
        step: usize,
        seed: u64,
        samples: Vec<MeshSample>,
    },
}

/// Runs blocking work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

async fn list_model_sets(State(app): State<AppState>) -> Json<Vec<String>> {
    Json(app.store.model_set_names())
}

async fn create_session(State(app): State<AppState>, Json(req): Json<CreateSession>) -> ApiResult<Created> {
    let id = app.store.create(&req.model_set, req.seed, req.flags)?;
    log::info!("session {id} created on model set {}", req.model_set);
    Ok(Json(Created { id }))
}

async fn add_phrase(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<AddPhrase>,
) -> ApiResult<StepResult> {
    let store = app.store.clone();
    blocking(move || store.with_session(&id, |s| s.add_phrase(&req.text, req.n_samples)))
        .await
        .map(Json)
}

async fn undo(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<StateSummary> {
    let store = app.store.clone();
    blocking(move || store.with_session(&id, |s| s.undo())).await.map(Json)
}

async fn state(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<StateSummary> {
    app.store.with_session(&id, |s| s.summary()).map(Json)
}

async fn snapshot(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<SessionSnapshot> {
    app.store.with_session(&id, |s| Ok(s.snapshot())).map(Json)
}

async fn restore(State(app): State<AppState>, Json(snap): Json<SessionSnapshot>) -> ApiResult<Created> {
    let store = app.store.clone();
    blocking(move || store.restore(&snap)).await.map(|id| Json(Created { id }))
}

async fn samples(
    State(app): State<AppState>,
    UrlPath((id, step)): UrlPath<(String, usize)>,
    Query(q): Query<SampleQuery>,
) -> ApiResult<SamplePayload> {
    let format = q.format.unwrap_or_else(|| "voxels".into());
    if format != "voxels" && format != "mesh" {
        return Err(ServiceError::BadRequest(format!("unknown format {format:?}; use voxels or mesh")));
    }
    let store = app.store.clone();
    blocking(move || {
        store.with_session(&id, |s| {
            let seed = q.seed.unwrap_or(s.state.seed);
            let n = q.n.unwrap_or(DEFAULT_SAMPLES);
            let cached = s.samples(step, seed, n)?;
            let pairs = cached.refs.iter().cloned().zip(cached.shapes.iter());
            Ok(if format == "mesh" {
                SamplePayload::Mesh {
                    step,
                    seed,
                    samples: pairs
                        .map(|(sample_ref, shape)| MeshSample {
                            sample_ref,
                            obj: export_mesh(&shape.occupancy()),
                        })
                        .collect(),
                }
            } else {
                let resolution = s.models.codebook.resolution();
                SamplePayload::Voxels {
                    step,
                    seed,
                    resolution,
                    samples: pairs
                        .map(|(sample_ref, shape)| VoxelSample {
                            sample_ref,
                            occupied: shape
                                .occupancy()
                                .bits()
                                .iter()
                                .enumerate()
                                .filter(|(_, &b)| b)
                                .map(|(i, _)| {
                                    let (x, y, z) = voxel_coords(resolution, i);
                                    [x as u16, y as u16, z as u16]
                                })
                                .collect(),
                        })
                        .collect(),
                }
            })
        })
    })
    .await
    .map(Json)
}

async fn health() -> &'static str {
    "ok"
}

/// The wire API, plus static files from `static_dir` for every other path.
pub fn router(store: Arc<Store>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/model-sets", get(list_model_sets))
        .route("/sessions", post(create_session))
        .route("/sessions/restore", post(restore))
        .route("/sessions/{id}/phrases", post(add_phrase))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/state", get(state))
        .route("/sessions/{id}/snapshot", get(snapshot))
        .route("/sessions/{id}/steps/{step}/samples", get(samples))
        .with_state(AppState { store });
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Loads every model-set directory under `root`; a root that is itself a
/// model set is served under the name "default".
pub fn load_model_sets(root: &Path) -> recshape_core::Result<BTreeMap<String, Arc<ModelSet>>> {
    let mut out = BTreeMap::new();
    if root.join(recshape_core::pipeline::CODEBOOK_FILE).is_file() {
        out.insert("default".to_string(), Arc::new(ModelSet::load(root)?));
        return Ok(out);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(recshape_core::pipeline::CODEBOOK_FILE).is_file())
        .collect();
    dirs.sort();
    for dir in dirs {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        out.insert(name, Arc::new(ModelSet::load(&dir)?));
    }
    if out.is_empty() {
        return Err(recshape_core::Error::Config(format!("no model sets under {}", root.display())));
    }
    Ok(out)
}

pub struct ServeConfig {
    pub models: PathBuf,
    pub port: u16,
    pub static_dir: Option<PathBuf>,
    /// Sessions are restored from and written to this file.
    pub snapshot: Option<PathBuf>,
}

/// Serves until interrupted, then writes session snapshots if configured.
pub async fn serve(config: ServeConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let store = Arc::new(Store::new(load_model_sets(&config.models)?));
    if let Some(path) = config.snapshot.as_ref().filter(|p| p.is_file()) {
        let snaps: Vec<SessionSnapshot> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        for s in &snaps {
            store.restore(s)?;
        }
        log::info!("restored {} sessions from {}", snaps.len(), path.display());
    }
    let app = router(store.clone(), config.static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", config.port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    if let Some(path) = &config.snapshot {
        let snaps = store.snapshot_all()?;
        std::fs::write(path, serde_json::to_string_pretty(&snaps)?)?;
        log::info!("wrote {} session snapshots to {}", snaps.len(), path.display());
    }
    Ok(())
}
