use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use recshape_core::distribution_grid::{max_diff_fraction, mean_entropy, ZRecord};
use recshape_core::pipeline::{sample_step, AblationFlags, ModelSet, SessionState};
use recshape_core::stable_hash;
use recshape_core::voxel_shapes::TsdfGrid;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

pub const MAX_SAMPLES: usize = 16;
pub const DEFAULT_SAMPLES: usize = 4;
/// Threshold of the per-step change summary.
pub const CHANGE_TAU: f64 = 1e-6;

type Result<T> = std::result::Result<T, ServiceError>;

pub fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Decoded samples of one step under one seed.
#[derive(Debug)]
pub struct CachedSamples {
    pub refs: Vec<String>,
    pub shapes: Vec<TsdfGrid>,
}

pub struct SessionRecord {
    pub id: String,
    pub model_set: String,
    pub models: Arc<ModelSet>,
    pub state: SessionState,
    pub created: u64,
    pub updated: u64,
    /// Keyed by (step, seed, n).
    pub cache: BTreeMap<(usize, u64, usize), Arc<CachedSamples>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: usize,
    pub phrase: String,
    pub mean_entropy: f64,
    /// Fraction of cells whose probabilities rose by less than 1e-6.
    pub unchanged_fraction: f64,
    pub changed_cells: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    #[serde(flatten)]
    pub summary: StepSummary,
    pub seed: u64,
    pub sample_refs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub id: String,
    pub model_set: String,
    pub seed: u64,
    pub flags: AblationFlags,
    pub t: usize,
    pub phrases: Vec<String>,
    pub initial_entropy: f64,
    pub steps: Vec<StepSummary>,
    pub created: u64,
    pub updated: u64,
}

/// Everything needed to rebuild a session; Z grids are informational, the
/// session is rebuilt by replaying its phrases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub id: String,
    pub model_set: String,
    pub seed: u64,
    pub flags: AblationFlags,
    pub phrases: Vec<String>,
    pub created: u64,
    pub updated: u64,
    pub z: Vec<ZRecord>,
}

fn step_summary(state: &SessionState, step: usize) -> Result<StepSummary> {
    let h = state.z_history();
    let unchanged = max_diff_fraction(&h[step], &h[step - 1], CHANGE_TAU)?;
    Ok(StepSummary {
        step,
        phrase: state.phrases()[step - 1].clone(),
        mean_entropy: mean_entropy(&h[step]),
        unchanged_fraction: unchanged,
        changed_cells: ((1.0 - unchanged) * h[step].cells() as f64).round() as usize,
    })
}

impl SessionRecord {
    pub fn summary(&self) -> Result<StateSummary> {
        Ok(StateSummary {
            id: self.id.clone(),
            model_set: self.model_set.clone(),
            seed: self.state.seed,
            flags: self.state.flags,
            t: self.state.t(),
            phrases: self.state.phrases().to_vec(),
            initial_entropy: mean_entropy(&self.state.z_history()[0]),
            steps: (1..=self.state.t())
                .map(|s| step_summary(&self.state, s))
                .collect::<Result<_>>()?,
            created: self.created,
            updated: self.updated,
        })
    }

    /// Samples of `step` under `seed`, drawn once and cached.
    pub fn samples(&mut self, step: usize, seed: u64, n: usize) -> Result<Arc<CachedSamples>> {
        if step == 0 || step > self.state.t() {
            return Err(ServiceError::NotFound(format!("step {step} (session is at t={})", self.state.t())));
        }
        if n == 0 || n > MAX_SAMPLES {
            return Err(ServiceError::BadRequest(format!("n must lie in 1..={MAX_SAMPLES}")));
        }
        if let Some(hit) = self.cache.get(&(step, seed, n)) {
            return Ok(hit.clone());
        }
        let h = self.state.z_history();
        let drawn = sample_step(&self.models, &h[step], &h[step - 1], seed, n, self.state.flags)?;
        let refs = drawn
            .grids
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let bytes: Vec<u8> = q.indices().iter().flat_map(|v| v.to_le_bytes()).collect();
                format!("{step}-{seed}-{i}-{:016x}", stable_hash(&bytes))
            })
            .collect();
        let entry = Arc::new(CachedSamples {
            refs,
            shapes: drawn.shapes,
        });
        self.cache.insert((step, seed, n), entry.clone());
        Ok(entry)
    }

    pub fn add_phrase(&mut self, phrase: &str, n: usize) -> Result<StepResult> {
        if n == 0 || n > MAX_SAMPLES {
            return Err(ServiceError::BadRequest(format!("n_samples must lie in 1..={MAX_SAMPLES}")));
        }
        let mut next = self.state.clone();
        next.advance(&self.models, phrase)?;
        self.state = next;
        self.updated = now_secs();
        let step = self.state.t();
        let seed = self.state.seed;
        let samples = self.samples(step, seed, n)?;
        Ok(StepResult {
            summary: step_summary(&self.state, step)?,
            seed,
            sample_refs: samples.refs.clone(),
        })
    }

    pub fn undo(&mut self) -> Result<StateSummary> {
        if self.state.t() == 0 {
            return Err(ServiceError::Conflict("nothing to undo at t=0".into()));
        }
        let t = self.state.t();
        self.state = self.state.undo();
        self.cache.retain(|&(step, _, _), _| step < t);
        self.updated = now_secs();
        self.summary()
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            id: self.id.clone(),
            model_set: self.model_set.clone(),
            seed: self.state.seed,
            flags: self.state.flags,
            phrases: self.state.phrases().to_vec(),
            created: self.created,
            updated: self.updated,
            z: self.state.z_history().iter().map(|z| z.to_record()).collect(),
        }
    }
}

/// Model sets by name and the live sessions.
pub struct Store {
    model_sets: BTreeMap<String, Arc<ModelSet>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionRecord>>>>,
}

impl Store {
    pub fn new(model_sets: BTreeMap<String, Arc<ModelSet>>) -> Self {
        Self {
            model_sets,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    pub fn model_set_names(&self) -> Vec<String> {
        self.model_sets.keys().cloned().collect()
    }

    fn models(&self, name: &str) -> Result<Arc<ModelSet>> {
        self.model_sets
            .get(name)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("model set {name:?}")))
    }

    fn insert(&self, record: SessionRecord) -> String {
        let id = record.id.clone();
        self.sessions
            .write()
            .expect("session map lock poisoned")
            .insert(id.clone(), Arc::new(Mutex::new(record)));
        id
    }

    pub fn create(&self, model_set: &str, seed: u64, flags: AblationFlags) -> Result<String> {
        let models = self.models(model_set)?;
        let now = now_secs();
        Ok(self.insert(SessionRecord {
            id: uuid::Uuid::new_v4().simple().to_string(),
            model_set: model_set.to_string(),
            state: SessionState::new(&models, seed, flags),
            models,
            created: now,
            updated: now,
            cache: BTreeMap::new(),
        }))
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<SessionRecord>>> {
        self.sessions
            .read()
            .expect("session map lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("session {id:?}")))
    }

    /// Runs `f` with the session locked; mutations of one session serialize.
    pub fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut SessionRecord) -> Result<T>) -> Result<T> {
        let session = self.get(id)?;
        let mut guard = session.lock().map_err(|_| ServiceError::Internal("session lock poisoned".into()))?;
        f(&mut guard)
    }

    /// Rebuilds a session by replay. An existing session with the same id is replaced.
    pub fn restore(&self, snap: &SessionSnapshot) -> Result<String> {
        let models = self.models(&snap.model_set)?;
        let state = SessionState::replay(&models, snap.seed, snap.flags, &snap.phrases)?;
        if !snap.z.is_empty() {
            let replayed: Vec<ZRecord> = state.z_history().iter().map(|z| z.to_record()).collect();
            if replayed != snap.z {
                return Err(ServiceError::BadRequest(format!(
                    "snapshot of session {} does not replay to its recorded distributions",
                    snap.id
                )));
            }
        }
        Ok(self.insert(SessionRecord {
            id: snap.id.clone(),
            model_set: snap.model_set.clone(),
            models,
            state,
            created: snap.created,
            updated: snap.updated,
            cache: BTreeMap::new(),
        }))
    }

    pub fn snapshot_all(&self) -> Result<Vec<SessionSnapshot>> {
        let sessions: Vec<_> = self
            .sessions
            .read()
            .expect("session map lock poisoned")
            .values()
            .cloned()
            .collect();
        let mut out = sessions
            .iter()
            .map(|s| {
                s.lock()
                    .map(|r| r.snapshot())
                    .map_err(|_| ServiceError::Internal("session lock poisoned".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
