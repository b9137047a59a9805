//! Annotation sessions and their on-disk layout.
//!
//! Each session is a directory under the data root holding `manifest.json`
//! and the JSON Lines record files also used by the CLI. Every mutation
//! rewrites the affected files (write to a temporary file, then rename)
//! while holding the session lock, so a restart reloads the last accepted
//! state.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use pathsup_core::io::{self, BOXES_FILE, DETECTIONS_FILE, PATHS_FILE, TRACKS_FILE, TRAJECTORIES_FILE};
use pathsup_core::trajectory::validate_boxes;
use pathsup_core::{BoxAnnotation, Detection, Engine, EngineConfig, PathAnnotation, PathId, PointTrack, Trajectory};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Outcome of the latest inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceMeta {
    /// Increases by one for every inference that saw new state.
    pub revision: u64,
    /// Session generation the result was computed from.
    pub generation: u64,
    pub failures: Vec<PathId>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub id: String,
    pub fps: f64,
    pub n_frames: u32,
    pub engine: EngineConfig,
    /// Bumped by every accepted mutation.
    pub generation: u64,
    pub inference: Option<InferenceMeta>,
}

#[derive(Debug, Clone)]
pub struct SessionState {
    pub manifest: Manifest,
    pub detections: Vec<Detection>,
    pub tracks: Vec<PointTrack>,
    pub paths: BTreeMap<PathId, PathAnnotation>,
    pub boxes: Vec<BoxAnnotation>,
    pub trajectories: Vec<Trajectory>,
}

impl SessionState {
    fn revision(&self) -> u64 {
        self.manifest.inference.as_ref().map_or(0, |m| m.revision)
    }

    fn up_to_date(&self) -> Option<&InferenceMeta> {
        self.manifest
            .inference
            .as_ref()
            .filter(|m| m.generation == self.manifest.generation)
    }
}

pub struct Session {
    pub id: String,
    dir: PathBuf,
    state: Mutex<SessionState>,
    running: AtomicBool,
}

/// Clears the running flag when inference ends, including on panic.
pub struct RunGuard(Arc<Session>);

impl Drop for RunGuard {
    fn drop(&mut self) {
        self.0.running.store(false, Ordering::Release);
    }
}

fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(tmp, path)
}

impl Session {
    pub fn state(&self) -> parking_lot::MutexGuard<'_, SessionState> {
        self.state.lock()
    }

    pub fn is_running(&self) -> bool {
        self.running.load(Ordering::Acquire)
    }

    fn save_manifest(&self, st: &SessionState) -> ApiResult<()> {
        let json = serde_json::to_vec_pretty(&st.manifest).map_err(|e| ApiError::Internal(e.to_string()))?;
        Ok(write_atomic(&self.dir.join(MANIFEST_FILE), &json)?)
    }

    fn save_paths(&self, st: &SessionState) -> ApiResult<()> {
        let paths: Vec<PathAnnotation> = st.paths.values().cloned().collect();
        Ok(write_atomic(
            &self.dir.join(PATHS_FILE),
            io::format_paths(&paths).as_bytes(),
        )?)
    }

    fn save_boxes(&self, st: &SessionState) -> ApiResult<()> {
        Ok(write_atomic(
            &self.dir.join(BOXES_FILE),
            io::format_boxes(&st.boxes).as_bytes(),
        )?)
    }

    /// Replaces the path with the same id, or adds it. Boxes already placed
    /// on that path must stay inside the new span.
    pub fn put_path(&self, path: PathAnnotation) -> ApiResult<()> {
        let mut st = self.state.lock();
        let own: Vec<BoxAnnotation> = st.boxes.iter().filter(|b| b.path_id == path.path_id).cloned().collect();
        validate_boxes(&path, &own).map_err(|e| ApiError::Invalid(format!("{e}; update the boxes first")))?;
        st.paths.insert(path.path_id, path);
        st.manifest.generation += 1;
        self.save_paths(&st)?;
        self.save_manifest(&st)
    }

    /// Removes a path together with its boxes.
    pub fn delete_path(&self, path_id: PathId) -> ApiResult<()> {
        let mut st = self.state.lock();
        if st.paths.remove(&path_id).is_none() {
            return Err(ApiError::NotFound(format!("path {path_id} not found")));
        }
        st.boxes.retain(|b| b.path_id != path_id);
        st.manifest.generation += 1;
        self.save_paths(&st)?;
        self.save_boxes(&st)?;
        self.save_manifest(&st)
    }

    /// Replaces every box of the session.
    pub fn put_boxes(&self, boxes: Vec<BoxAnnotation>) -> ApiResult<()> {
        let mut st = self.state.lock();
        let mut by_path: BTreeMap<PathId, Vec<BoxAnnotation>> = BTreeMap::new();
        for b in &boxes {
            by_path.entry(b.path_id).or_default().push(b.clone());
        }
        for (path_id, own) in &by_path {
            let path = st
                .paths
                .get(path_id)
                .ok_or_else(|| ApiError::Invalid(format!("field path_id: box references unknown path {path_id}")))?;
            validate_boxes(path, own)?;
        }
        st.boxes = boxes;
        st.manifest.generation += 1;
        self.save_boxes(&st)?;
        self.save_manifest(&st)
    }

    /// Marks inference as running; fails when another run is in progress.
    pub fn try_start(self: &Arc<Self>) -> ApiResult<RunGuard> {
        self.running
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .map_err(|_| ApiError::Conflict(format!("inference already running for session {}", self.id)))?;
        Ok(RunGuard(Arc::clone(self)))
    }

    /// Runs inference on the current state. When nothing changed since the
    /// last run the stored result is returned unchanged. Blocking; call from
    /// a blocking task while holding the [`RunGuard`].
    pub fn run_inference(&self, _guard: &RunGuard) -> ApiResult<InferenceMeta> {
        let snapshot = {
            let st = self.state.lock();
            if let Some(meta) = st.up_to_date() {
                return Ok(meta.clone());
            }
            st.clone()
        };
        let paths: Vec<PathAnnotation> = snapshot.paths.values().cloned().collect();
        let engine = Engine::new(snapshot.manifest.engine.clone())?;
        let output = engine.run(&snapshot.detections, &snapshot.tracks, &paths, &snapshot.boxes)?;

        let mut st = self.state.lock();
        let meta = InferenceMeta {
            revision: st.revision() + 1,
            generation: snapshot.manifest.generation,
            failures: output.report.failures,
            warnings: output.report.warnings,
        };
        st.trajectories = output.trajectories;
        st.manifest.inference = Some(meta.clone());
        write_atomic(
            &self.dir.join(TRAJECTORIES_FILE),
            io::format_trajectories(&st.trajectories).as_bytes(),
        )?;
        self.save_manifest(&st)?;
        log::info!("session {}: revision {}", self.id, meta.revision);
        Ok(meta)
    }
}

/// Validated contents of a new session.
pub struct NewSession {
    pub fps: f64,
    pub n_frames: u32,
    pub engine: EngineConfig,
    pub detections: Vec<Detection>,
    pub tracks: Vec<PointTrack>,
}

pub struct Store {
    root: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl Store {
    /// Opens the data root, creating it when missing, and loads every
    /// session directory found there.
    pub fn open(root: impl Into<PathBuf>) -> pathsup_core::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let mut sessions = HashMap::new();
        let mut dirs: Vec<PathBuf> = fs::read_dir(&root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(MANIFEST_FILE).is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            let session = load_session(&dir)
                .map_err(|e| pathsup_core::Error::InvalidConfig(format!("session directory {}: {e}", dir.display())))?;
            sessions.insert(session.id.clone(), Arc::new(session));
        }
        log::info!("loaded {} sessions from {}", sessions.len(), root.display());
        Ok(Self {
            root,
            sessions: RwLock::new(sessions),
        })
    }

    pub fn get(&self, id: &str) -> ApiResult<Arc<Session>> {
        self.sessions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("session {id} not found")))
    }

    pub fn create(&self, new: NewSession) -> ApiResult<Arc<Session>> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let dir = self.root.join(&id);
        fs::create_dir_all(&dir)?;
        let state = SessionState {
            manifest: Manifest {
                id: id.clone(),
                fps: new.fps,
                n_frames: new.n_frames,
                engine: new.engine,
                generation: 0,
                inference: None,
            },
            detections: new.detections,
            tracks: new.tracks,
            paths: BTreeMap::new(),
            boxes: Vec::new(),
            trajectories: Vec::new(),
        };
        write_atomic(
            &dir.join(DETECTIONS_FILE),
            io::format_detections(&state.detections).as_bytes(),
        )?;
        write_atomic(&dir.join(TRACKS_FILE), io::format_tracks(&state.tracks).as_bytes())?;
        let session = Session {
            id: id.clone(),
            dir,
            state: Mutex::new(state),
            running: AtomicBool::new(false),
        };
        {
            let st = session.state.lock();
            session.save_paths(&st)?;
            session.save_boxes(&st)?;
            session.save_manifest(&st)?;
        }
        let session = Arc::new(session);
        self.sessions.write().insert(id, Arc::clone(&session));
        Ok(session)
    }
}

fn load_session(dir: &Path) -> pathsup_core::Result<Session> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)
        .map_err(|e| pathsup_core::Error::InvalidConfig(format!("{MANIFEST_FILE}: {e}")))?;
    let trajectories_path = dir.join(TRAJECTORIES_FILE);
    let trajectories = if trajectories_path.exists() {
        io::load_trajectories(trajectories_path)?
    } else {
        Vec::new()
    };
    let paths = io::load_paths(dir.join(PATHS_FILE))?;
    let state = SessionState {
        detections: io::load_detections(dir.join(DETECTIONS_FILE))?,
        tracks: io::load_tracks(dir.join(TRACKS_FILE))?,
        paths: paths.into_iter().map(|p| (p.path_id, p)).collect(),
        boxes: io::load_boxes(dir.join(BOXES_FILE))?,
        trajectories,
        manifest,
    };
    Ok(Session {
        id: state.manifest.id.clone(),
        dir: dir.to_path_buf(),
        state: Mutex::new(state),
        running: AtomicBool::new(false),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_session(store: &Store) -> Arc<Session> {
        store
            .create(NewSession {
                fps: 10.0,
                n_frames: 10,
                engine: EngineConfig::with_fps(10.0),
                detections: Vec::new(),
                tracks: Vec::new(),
            })
            .unwrap()
    }

    #[test]
    fn second_start_conflicts_until_the_guard_drops() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let session = empty_session(&store);
        let guard = session.try_start().unwrap();
        assert!(matches!(session.try_start(), Err(ApiError::Conflict(_))));
        assert!(session.is_running());
        drop(guard);
        assert!(!session.is_running());
        assert!(session.try_start().is_ok());
    }

    #[test]
    fn revision_moves_only_with_new_state() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let session = empty_session(&store);
        let run = |s: &Arc<Session>| s.run_inference(&s.try_start().unwrap()).unwrap().revision;
        assert_eq!(run(&session), 1);
        assert_eq!(run(&session), 1);
        session.put_boxes(Vec::new()).unwrap();
        assert_eq!(run(&session), 2);
    }
}
