//! `/v1` JSON-over-HTTP API: editing sessions over map bundles, brush-mask
//! upload, asynchronous generation jobs with polling, renders, undo and export.

mod error;
mod state;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use smartbrush_core::map::bundle::{decode_gray_png, encode_rgb_png};
use smartbrush_core::map::{blend_region, load_map_bundle, save_map_bundle, BrushMask, Coord, GameMap};
use smartbrush_core::stitching::{generate_region, StitchConfig};
use uuid::Uuid;

pub use error::ApiError;
pub use state::{
    AppState, GenerationJob, JobResult, JobStatus, PairSummary, ServiceConfig, Session, DEFAULT_UNDO_DEPTH,
};

use state::lock;

pub fn router(state: AppState) -> Router {
    let v1 = Router::new()
        .route("/sessions", post(open_session))
        .route("/sessions/{id}", get(session_info))
        .route("/sessions/{id}/render", get(render))
        .route("/sessions/{id}/masks", put(submit_masks))
        .route("/sessions/{id}/generate", post(start_generation))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/export", post(export))
        .route("/jobs/{id}", get(job_status));
    Router::new().nest("/v1", v1).with_state(state)
}

pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Deserialize)]
pub struct OpenSession {
    /// Bundle directory relative to the bundle root.
    pub bundle: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MapInfo {
    pub name: String,
    pub grid_width: u32,
    pub grid_height: u32,
    pub tile_size: usize,
    pub materials: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: Uuid,
    pub map: MapInfo,
    pub pending_masks: Vec<String>,
    pub undo_depth: usize,
    pub running_job: Option<Uuid>,
}

fn info(s: &Session) -> SessionInfo {
    let m = &s.map;
    SessionInfo {
        id: s.id,
        map: MapInfo {
            name: m.name.clone(),
            grid_width: m.grid_width,
            grid_height: m.grid_height,
            tile_size: m.tile_size,
            materials: m.material_ids().map(String::from).collect(),
        },
        pending_masks: s.masks.keys().map(Coord::to_string).collect(),
        undo_depth: s.undo.len(),
        running_job: s.running_job,
    }
}

async fn open_session(
    State(st): State<AppState>,
    Json(req): Json<OpenSession>,
) -> Result<(StatusCode, Json<SessionInfo>), ApiError> {
    let path = st.resolve_bundle(&req.bundle)?;
    let load_path = path.clone();
    let map = tokio::task::spawn_blocking(move || load_map_bundle(load_path))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    let id = Uuid::new_v4();
    let session = Session {
        id,
        bundle_path: path,
        map: Arc::new(map),
        masks: BTreeMap::new(),
        undo: Default::default(),
        running_job: None,
    };
    let body = info(&session);
    lock(&st.0.sessions).insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(body)))
}

async fn session_info(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionInfo>, ApiError> {
    let s = st.session(&id)?;
    let body = info(&lock(&s));
    Ok(Json(body))
}

#[derive(Debug, Default, Deserialize)]
pub struct RenderQuery {
    pub x0: Option<u32>,
    pub y0: Option<u32>,
    pub x1: Option<u32>,
    pub y1: Option<u32>,
    /// Integer downsampling factor; 1 is full resolution.
    pub zoom: Option<usize>,
}

/// Renders the inclusive chunk rectangle at `1/zoom` scale from the last committed map.
pub fn render_png(map: &GameMap, q: &RenderQuery) -> Result<Vec<u8>, ApiError> {
    let from = Coord::new(q.x0.unwrap_or(0), q.y0.unwrap_or(0));
    let to = Coord::new(
        q.x1.unwrap_or(map.grid_width.saturating_sub(1)),
        q.y1.unwrap_or(map.grid_height.saturating_sub(1)),
    );
    let zoom = q.zoom.unwrap_or(1);
    if zoom == 0 {
        return Err(ApiError::BadRequest("zoom must be at least 1".into()));
    }
    let img = blend_region(map, from, to)?;
    Ok(encode_rgb_png(&img.downsample(zoom)))
}

async fn render(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<RenderQuery>,
) -> Result<impl IntoResponse, ApiError> {
    let s = st.session(&id)?;
    let map = lock(&s).map.clone();
    let png = tokio::task::spawn_blocking(move || render_png(&map, &q))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MaskUpload {
    /// `"x,y"` → base64 8-bit grayscale PNG; nonzero pixels are brushed.
    pub masks: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MaskAck {
    pub accepted: Vec<String>,
}

/// Decodes an upload against the map's grid and tile size.
pub fn decode_masks(map: &GameMap, upload: &MaskUpload) -> Result<BTreeMap<Coord, BrushMask>, ApiError> {
    let b64 = base64::engine::general_purpose::STANDARD;
    let mut out = BTreeMap::new();
    for (key, data) in &upload.masks {
        let coord: Coord = key.parse().map_err(ApiError::BadRequest)?;
        if !map.chunks.contains_key(&coord) {
            return Err(ApiError::BadRequest(format!("no chunk at {coord}")));
        }
        let bytes = b64
            .decode(data)
            .map_err(|e| ApiError::BadRequest(format!("mask {coord}: {e}")))?;
        let plane = decode_gray_png(&bytes)?;
        if plane.dims() != (map.tile_size, map.tile_size) {
            return Err(ApiError::BadRequest(format!(
                "mask {coord} is {:?}, tiles are {}x{}",
                plane.dims(),
                map.tile_size,
                map.tile_size
            )));
        }
        out.insert(coord, BrushMask::from_plane(&plane)?);
    }
    Ok(out)
}

async fn submit_masks(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(upload): Json<MaskUpload>,
) -> Result<Json<MaskAck>, ApiError> {
    let s = st.session(&id)?;
    let map = lock(&s).map.clone();
    let masks = decode_masks(&map, &upload)?;
    let accepted = masks.keys().map(Coord::to_string).collect();
    lock(&s).masks = masks;
    Ok(Json(MaskAck { accepted }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerateRequest {
    #[serde(default = "default_generator")]
    pub generator: String,
    #[serde(default)]
    pub seed: u64,
    /// Skip the stitch and fade steps when false.
    #[serde(default = "default_true")]
    pub stitch: bool,
}

fn default_generator() -> String {
    "baseline".into()
}

fn default_true() -> bool {
    true
}

async fn start_generation(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<GenerateRequest>,
) -> Result<(StatusCode, Json<GenerationJob>), ApiError> {
    let generator = st
        .0
        .generators
        .get(&req.generator)
        .cloned()
        .ok_or_else(|| ApiError::BadRequest(format!("unknown generator `{}`", req.generator)))?;
    let s = st.session(&id)?;
    let (job, map, masks) = {
        let mut sess = lock(&s);
        if let Some(running) = sess.running_job {
            return Err(ApiError::Conflict(format!("session already has job {running} in progress")));
        }
        if sess.masks.is_empty() {
            return Err(ApiError::BadRequest("no masks submitted".into()));
        }
        let job = GenerationJob {
            id: Uuid::new_v4(),
            session_id: sess.id,
            generator: req.generator.clone(),
            seed: req.seed,
            coords: sess.masks.keys().map(Coord::to_string).collect(),
            status: JobStatus::Queued,
            result: None,
            error: None,
        };
        sess.running_job = Some(job.id);
        (job, sess.map.clone(), std::mem::take(&mut sess.masks))
    };
    lock(&st.0.jobs).insert(job.id, job.clone());

    let config = StitchConfig {
        seed: req.seed,
        stitch: req.stitch,
        ..StitchConfig::default()
    };
    let job_id = job.id;
    let worker = st.clone();
    tokio::task::spawn_blocking(move || {
        worker.update_job(job_id, |j| {
            j.advance(JobStatus::Running);
        });
        let start = Instant::now();
        let outcome = generate_region(&map, &masks, generator.as_ref(), &config);
        let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        let mut sess = lock(&s);
        sess.running_job = None;
        match outcome {
            Ok(out) => {
                let touched = masks
                    .keys()
                    .filter_map(|c| out.map.chunks.get(c).map(|ch| (*c, ch.clone())))
                    .collect();
                sess.commit(touched, worker.0.config.undo_depth);
                let result = JobResult {
                    pairs: out.pairs.iter().map(PairSummary::from).collect(),
                    elapsed_ms,
                };
                worker.update_job(job_id, |j| {
                    if j.advance(JobStatus::Done) {
                        j.result = Some(result);
                    }
                });
            }
            Err(e) => worker.update_job(job_id, |j| {
                if j.advance(JobStatus::Failed) {
                    j.error = Some(e.to_string());
                }
            }),
        }
    });
    Ok((StatusCode::ACCEPTED, Json(job)))
}

async fn job_status(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<GenerationJob>, ApiError> {
    Ok(Json(st.job(&id)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UndoAck {
    pub restored: Vec<String>,
    pub remaining: usize,
}

async fn undo(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<UndoAck>, ApiError> {
    let s = st.session(&id)?;
    let mut sess = lock(&s);
    if let Some(j) = sess.running_job {
        return Err(ApiError::Conflict(format!("job {j} in progress")));
    }
    let restored = sess
        .undo()
        .ok_or_else(|| ApiError::Conflict("nothing to undo".into()))?;
    Ok(Json(UndoAck {
        restored: restored.iter().map(Coord::to_string).collect(),
        remaining: sess.undo.len(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExportRequest {
    /// Directory name created below the export root.
    pub name: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExportAck {
    pub path: String,
}

async fn export(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ExportRequest>,
) -> Result<(StatusCode, Json<ExportAck>), ApiError> {
    let path = st.export_path(&req.name)?;
    if path.exists() {
        return Err(ApiError::Conflict(format!("export `{}` already exists", req.name)));
    }
    let s = st.session(&id)?;
    let map = lock(&s).map.clone();
    let out = path.clone();
    tokio::task::spawn_blocking(move || save_map_bundle(&map, out))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok((
        StatusCode::CREATED,
        Json(ExportAck {
            path: path.display().to_string(),
        }),
    ))
}
