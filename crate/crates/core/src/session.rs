//! Interactive sessions: one simulator state stream each, driven by actions.
//!
//! A session keeps its scenario and an append-only action log; the current
//! state is always the result of replaying that log from the scenario's
//! initial state. Steps on one session are serialised through a fair lock,
//! so they apply in arrival order; distinct sessions step independently.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::{FairMutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::dataio::{self, DataError};
use crate::geometry::CoordinateMap;
use crate::kinex::{KinematicScript, ScriptFrame, ToolState};
use crate::renderer::{incoming_flow, LabelRaster, SimFrame, ToolLibrary};
use crate::scenegraph::{build_graph, SceneGraph};
use crate::simulator::{Action, ScenarioSpec, Schedule, SimError, SimState, Simulator};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl SessionError {
    pub fn kind(&self) -> &'static str {
        match self {
            SessionError::UnknownSession(_) => "UnknownSession",
            SessionError::Sim(e) => e.kind(),
            SessionError::Data(e) => e.kind(),
        }
    }
}

/// Everything a client sees after a step.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub frame_index: u64,
    pub state: SimState,
    pub labels: LabelRaster,
    pub sim_frame: SimFrame,
    pub graph: SceneGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub frame_index: u64,
    pub state: SimState,
    pub log_len: usize,
    pub created_ms: u64,
    pub updated_ms: u64,
}

/// Persisted form of a session: the scenario and the action log, never
/// the derived state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: String,
    pub session_id: String,
    pub created_ms: u64,
    pub scenario: ScenarioSpec,
    pub actions: Vec<Action>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let tmp = path.with_extension("json.tmp");
        dataio::write_json(&tmp, self)?;
        std::fs::rename(&tmp, path).map_err(dataio::io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        dataio::read_versioned_json(path)
    }
}

struct Session {
    scenario: ScenarioSpec,
    sim: Simulator,
    state: SimState,
    previous: Option<SimState>,
    log: Vec<Action>,
    created_ms: u64,
    updated_ms: u64,
}

impl Session {
    fn observe(&self, labels: LabelRaster) -> Result<Observation, SessionError> {
        let flow = incoming_flow(self.previous.as_ref(), &self.state, &labels, &self.sim.renderer)
            .map_err(|e| SimError::InvalidState(e.to_string()))?;
        let graph =
            build_graph(self.state.frame_index, &labels, &flow).map_err(|e| SimError::InvalidState(e.to_string()))?;
        Ok(Observation {
            frame_index: self.state.frame_index,
            state: self.state.clone(),
            sim_frame: SimFrame::from_labels(&labels),
            labels,
            graph,
        })
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Optional periodic checkpointing to `<dir>/<session_id>.json`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointPolicy {
    pub dir: Option<PathBuf>,
    /// Write after every `every` steps; `0` writes only on explicit request.
    pub every: usize,
}

pub struct SessionManager {
    map: CoordinateMap,
    tools: ToolLibrary,
    checkpoints: CheckpointPolicy,
    sessions: RwLock<HashMap<Uuid, Arc<FairMutex<Session>>>>,
}

impl SessionManager {
    pub fn new(map: CoordinateMap, tools: ToolLibrary) -> Self {
        Self {
            map,
            tools,
            checkpoints: CheckpointPolicy::default(),
            sessions: RwLock::new(HashMap::new()),
        }
    }

    pub fn with_checkpoints(mut self, policy: CheckpointPolicy) -> Self {
        self.checkpoints = policy;
        self
    }

    pub fn map(&self) -> &CoordinateMap {
        &self.map
    }

    /// Simulator a session with this scenario steps with.
    pub fn simulator_for(&self, spec: &ScenarioSpec) -> Simulator {
        Simulator::new(self.map, self.tools.clone(), spec.bounds)
    }

    fn get(&self, id: &str) -> Result<Arc<FairMutex<Session>>, SessionError> {
        let unknown = || SessionError::UnknownSession(id.to_string());
        let uuid = Uuid::parse_str(id).map_err(|_| unknown())?;
        self.sessions.read().get(&uuid).cloned().ok_or_else(unknown)
    }

    /// Starts a session. A scenario with an action schedule has it applied
    /// and logged; script schedules are rejected because a session's history
    /// must be an action log.
    pub fn create(&self, spec: ScenarioSpec) -> Result<String, SessionError> {
        self.create_with_id(Uuid::new_v4(), spec, now_ms())
    }

    fn create_with_id(&self, id: Uuid, spec: ScenarioSpec, created_ms: u64) -> Result<String, SessionError> {
        spec.validate()?;
        let schedule = match &spec.schedule {
            None => Vec::new(),
            Some(Schedule::Actions(a)) => a.clone(),
            Some(Schedule::Script(_)) => {
                return Err(SimError::InvalidRequest("sessions take action schedules, not scripts".into()).into())
            }
        };
        let sim = self.simulator_for(&spec);
        let mut session = Session {
            state: spec.initial_state.clone(),
            previous: None,
            scenario: ScenarioSpec { schedule: None, ..spec },
            sim,
            log: Vec::new(),
            created_ms,
            updated_ms: created_ms,
        };
        for action in schedule {
            let next = session.sim.advance(&session.state, &action)?;
            session.previous = Some(std::mem::replace(&mut session.state, next));
            session.log.push(action);
        }
        let mut map = self.sessions.write();
        if map.contains_key(&id) {
            return Err(SimError::InvalidRequest(format!("session {id} already exists")).into());
        }
        map.insert(id, Arc::new(FairMutex::new(session)));
        Ok(id.to_string())
    }

    /// Applies one action. On error nothing changes.
    pub fn step(&self, id: &str, action: &Action) -> Result<Observation, SessionError> {
        let handle = self.get(id)?;
        let mut s = handle.lock();
        let (next, labels) = s.sim.transition(&s.state, action)?;
        let previous = std::mem::replace(&mut s.state, next);
        s.previous = Some(previous);
        s.log.push(action.clone());
        s.updated_ms = now_ms();
        let obs = s.observe(labels);
        if let (Some(dir), every) = (&self.checkpoints.dir, self.checkpoints.every) {
            if every > 0 && s.log.len() % every == 0 {
                checkpoint_of(id, &s).save(&dir.join(format!("{id}.json")))?;
            }
        }
        obs
    }

    /// Returns to the scenario's initial state and clears the log.
    pub fn reset(&self, id: &str) -> Result<Observation, SessionError> {
        let handle = self.get(id)?;
        let mut s = handle.lock();
        s.state = s.scenario.initial_state.clone();
        s.previous = None;
        s.log.clear();
        s.updated_ms = now_ms();
        let labels = s.sim.renderer.labels(&s.state);
        s.observe(labels)
    }

    pub fn observe(&self, id: &str) -> Result<Observation, SessionError> {
        let handle = self.get(id)?;
        let s = handle.lock();
        let labels = s.sim.renderer.labels(&s.state);
        s.observe(labels)
    }

    pub fn info(&self, id: &str) -> Result<SessionInfo, SessionError> {
        let handle = self.get(id)?;
        let s = handle.lock();
        Ok(SessionInfo {
            session_id: id.to_string(),
            frame_index: s.state.frame_index,
            state: s.state.clone(),
            log_len: s.log.len(),
            created_ms: s.created_ms,
            updated_ms: s.updated_ms,
        })
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().keys().map(Uuid::to_string).collect();
        ids.sort();
        ids
    }

    pub fn remove(&self, id: &str) -> Result<(), SessionError> {
        let uuid = Uuid::parse_str(id).map_err(|_| SessionError::UnknownSession(id.to_string()))?;
        self.sessions
            .write()
            .remove(&uuid)
            .map(|_| ())
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    pub fn checkpoint(&self, id: &str) -> Result<Checkpoint, SessionError> {
        let handle = self.get(id)?;
        let s = handle.lock();
        Ok(checkpoint_of(id, &s))
    }

    /// Recreates a session by replaying a checkpoint's log.
    pub fn restore(&self, checkpoint: &Checkpoint) -> Result<String, SessionError> {
        let id = Uuid::parse_str(&checkpoint.session_id)
            .map_err(|_| SimError::InvalidRequest(format!("bad session id `{}`", checkpoint.session_id)))?;
        let spec = ScenarioSpec {
            schedule: Some(Schedule::Actions(checkpoint.actions.clone())),
            ..checkpoint.scenario.clone()
        };
        self.create_with_id(id, spec, checkpoint.created_ms)
    }

    /// The current state recomputed from the scenario and the action log.
    pub fn replay_log(&self, id: &str) -> Result<SimState, SessionError> {
        let handle = self.get(id)?;
        let (spec, log) = {
            let s = handle.lock();
            (s.scenario.clone(), s.log.clone())
        };
        let states = self.simulator_for(&spec).run_scenario(&ScenarioSpec {
            schedule: Some(Schedule::Actions(log)),
            ..spec
        })?;
        Ok(states.last().cloned().expect("run_scenario returns the initial state"))
    }

    /// The session history as a script, one frame per state from the
    /// initial state on. Tools that appear later are listed as absent in
    /// earlier frames, with the kinematics of their first appearance.
    pub fn export(&self, id: &str, fps: f64) -> Result<KinematicScript, SessionError> {
        let handle = self.get(id)?;
        let (spec, log) = {
            let s = handle.lock();
            (s.scenario.clone(), s.log.clone())
        };
        let states = self.simulator_for(&spec).run_scenario(&ScenarioSpec {
            schedule: Some(Schedule::Actions(log)),
            ..spec
        })?;
        Ok(states_to_script(&states, fps, format!("session:{id}")))
    }
}

fn checkpoint_of(id: &str, s: &Session) -> Checkpoint {
    Checkpoint {
        format_version: dataio::FORMAT_VERSION.into(),
        session_id: id.to_string(),
        created_ms: s.created_ms,
        scenario: s.scenario.clone(),
        actions: s.log.clone(),
    }
}

/// Converts a state sequence into a script with a constant tool list.
pub fn states_to_script(states: &[SimState], fps: f64, source_id: String) -> KinematicScript {
    let mut first_seen: Vec<ToolState> = Vec::new();
    for t in states.iter().flat_map(|s| &s.tools) {
        if !first_seen.iter().any(|f| f.tool_class == t.tool_class) {
            first_seen.push(ToolState { present: false, ..*t });
        }
    }
    first_seen.sort_by_key(|t| t.tool_class);
    let frames = states
        .iter()
        .map(|s| {
            let tools = first_seen
                .iter()
                .map(|f| s.tool(f.tool_class).copied().unwrap_or(*f))
                .collect();
            ScriptFrame {
                anatomy: s.anatomy,
                tools,
            }
        })
        .collect();
    KinematicScript::new(fps, frames, source_id)
}
