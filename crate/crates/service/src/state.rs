use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use smartbrush_core::generators::checkpoint::load_checkpoint;
use smartbrush_core::generators::{GeneratorError, GeneratorModel};
use smartbrush_core::map::{BrushMask, Chunk, Coord, GameMap};
use smartbrush_core::stitching::{Direction, PairReport};
use uuid::Uuid;

use crate::error::ApiError;

pub const DEFAULT_UNDO_DEPTH: usize = 10;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Sessions may only open bundles below this directory.
    pub bundle_root: PathBuf,
    /// Exports are written below this directory.
    pub export_root: PathBuf,
    pub undo_depth: usize,
    /// Extra generators by name, loaded from checkpoint files at startup.
    pub models: Vec<(String, PathBuf)>,
}

impl ServiceConfig {
    pub fn new(bundle_root: impl Into<PathBuf>) -> Self {
        let bundle_root = bundle_root.into();
        Self {
            export_root: bundle_root.join("exports"),
            bundle_root,
            undo_depth: DEFAULT_UNDO_DEPTH,
            models: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }

    fn rank(self) -> u8 {
        match self {
            JobStatus::Queued => 0,
            JobStatus::Running => 1,
            JobStatus::Done | JobStatus::Failed => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub a: String,
    pub b: String,
    pub direction: Direction,
    pub seam_before: f64,
    pub seam_after: f64,
    pub stitched_pixels: usize,
}

impl From<&PairReport> for PairSummary {
    fn from(r: &PairReport) -> Self {
        Self {
            a: r.pair.a.to_string(),
            b: r.pair.b.to_string(),
            direction: r.pair.direction,
            seam_before: r.seam_before,
            seam_after: r.seam_after,
            stitched_pixels: r.stitched_pixels,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    pub pairs: Vec<PairSummary>,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationJob {
    pub id: Uuid,
    pub session_id: Uuid,
    pub generator: String,
    pub seed: u64,
    pub coords: Vec<String>,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<JobResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl GenerationJob {
    /// Moves to `next`; backwards moves and changes after a terminal state are refused.
    pub fn advance(&mut self, next: JobStatus) -> bool {
        if self.status.is_terminal() || next.rank() <= self.status.rank() {
            return false;
        }
        self.status = next;
        true
    }
}

pub struct Session {
    pub id: Uuid,
    pub bundle_path: PathBuf,
    /// Last committed map; renders read this while a job runs.
    pub map: Arc<GameMap>,
    pub masks: BTreeMap<Coord, BrushMask>,
    pub undo: VecDeque<BTreeMap<Coord, Chunk>>,
    pub running_job: Option<Uuid>,
}

impl Session {
    /// Applies a finished job's chunks, saving the replaced ones for undo.
    pub fn commit(&mut self, chunks: BTreeMap<Coord, Chunk>, depth: usize) {
        let mut map = (*self.map).clone();
        let mut snapshot = BTreeMap::new();
        for (c, chunk) in chunks {
            if let Some(old) = map.chunks.insert(c, chunk) {
                snapshot.insert(c, old);
            }
        }
        self.undo.push_back(snapshot);
        while self.undo.len() > depth {
            self.undo.pop_front();
        }
        self.map = Arc::new(map);
    }

    pub fn undo(&mut self) -> Option<Vec<Coord>> {
        let snapshot = self.undo.pop_back()?;
        let mut map = (*self.map).clone();
        let coords = snapshot.keys().copied().collect();
        map.chunks.extend(snapshot);
        self.map = Arc::new(map);
        Some(coords)
    }
}

pub struct Inner {
    pub config: ServiceConfig,
    pub generators: HashMap<String, Arc<GeneratorModel>>,
    pub sessions: Mutex<HashMap<Uuid, Arc<Mutex<Session>>>>,
    pub jobs: Mutex<HashMap<Uuid, GenerationJob>>,
}

#[derive(Clone)]
pub struct AppState(pub Arc<Inner>);

pub(crate) fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Result<Self, GeneratorError> {
        let mut generators = HashMap::new();
        generators.insert("baseline".to_string(), Arc::new(GeneratorModel::baseline()));
        for (name, path) in &config.models {
            generators.insert(name.clone(), Arc::new(load_checkpoint(path)?));
        }
        Ok(Self(Arc::new(Inner {
            config,
            generators,
            sessions: Mutex::new(HashMap::new()),
            jobs: Mutex::new(HashMap::new()),
        })))
    }

    pub fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        let uuid = Uuid::parse_str(id).map_err(|_| ApiError::NotFound(format!("unknown session `{id}`")))?;
        lock(&self.0.sessions)
            .get(&uuid)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown session `{id}`")))
    }

    pub fn job(&self, id: &str) -> Result<GenerationJob, ApiError> {
        let uuid = Uuid::parse_str(id).map_err(|_| ApiError::NotFound(format!("unknown job `{id}`")))?;
        lock(&self.0.jobs)
            .get(&uuid)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown job `{id}`")))
    }

    pub fn update_job(&self, id: Uuid, f: impl FnOnce(&mut GenerationJob)) {
        if let Some(j) = lock(&self.0.jobs).get_mut(&id) {
            f(j);
        }
    }

    /// Resolves `relative` below the bundle root, refusing paths that escape it.
    pub fn resolve_bundle(&self, relative: &str) -> Result<PathBuf, ApiError> {
        let root = self
            .0
            .config
            .bundle_root
            .canonicalize()
            .map_err(|e| ApiError::Internal(format!("bundle root: {e}")))?;
        let path = root
            .join(relative)
            .canonicalize()
            .map_err(|_| ApiError::NotFound(format!("no bundle `{relative}`")))?;
        if !path.starts_with(&root) {
            return Err(ApiError::BadRequest(format!("bundle `{relative}` is outside the bundle root")));
        }
        Ok(path)
    }

    pub fn export_path(&self, name: &str) -> Result<PathBuf, ApiError> {
        valid_name(name)?;
        Ok(self.0.config.export_root.join(name))
    }
}

fn valid_name(name: &str) -> Result<(), ApiError> {
    let ok = !name.is_empty()
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
    if ok {
        Ok(())
    } else {
        Err(ApiError::BadRequest(format!("invalid export name `{name}`")))
    }
}
