//! JSON message schemas shared by the HTTP endpoints and the WebSocket
//! step stream. Every message carries `"v": 1`.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use phacosim_core::dataio::{encode_frame_png, encode_label_png};
use phacosim_core::geometry::{Bounds, CoordinateMap};
use phacosim_core::kinex::KinematicScript;
use phacosim_core::scenegraph::SceneGraph;
use phacosim_core::session::{Observation, SessionError};
use phacosim_core::simulator::{Action, ScenarioSpec, SimState};
use serde::{Deserialize, Serialize};

pub const WIRE_VERSION: u32 = 1;
pub const PROTOCOL: &str = "phacosim-session";

fn wire_version() -> u32 {
    WIRE_VERSION
}

/// Sent on `GET /v1/handshake`: everything a client needs to turn pointer
/// motion into simulator deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub v: u32,
    pub protocol: String,
    pub width: u32,
    pub height: u32,
    pub sim_scale: f64,
    /// `sim = (pixel − image_center) / pixels_per_unit`.
    pub pixels_per_unit: f64,
    pub image_center: [f64; 2],
    pub fps: f64,
    pub bounds: Bounds,
    pub class_names: BTreeMap<u8, String>,
}

impl Handshake {
    pub fn new(map: &CoordinateMap, fps: f64, class_names: BTreeMap<u8, String>) -> Self {
        Self {
            v: WIRE_VERSION,
            protocol: PROTOCOL.into(),
            width: map.image_width,
            height: map.image_height,
            sim_scale: map.sim_scale,
            pixels_per_unit: map.pixels_per_unit(),
            image_center: [f64::from(map.image_width) / 2.0, f64::from(map.image_height) / 2.0],
            fps,
            bounds: map.image_bounds(),
            class_names,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateRequest {
    #[serde(default = "wire_version")]
    pub v: u32,
    /// Omitted: a nominal eye without tools, bounded by the image.
    #[serde(default)]
    pub scenario: Option<ScenarioSpec>,
}

impl Default for CreateRequest {
    fn default() -> Self {
        Self {
            v: WIRE_VERSION,
            scenario: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRequest {
    #[serde(default = "wire_version")]
    pub v: u32,
    /// Client sequence number, echoed in the reply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    pub action: Action,
}

/// Observation bundle: state, base64 PNG rasters and the inline graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationMsg {
    pub v: u32,
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    pub frame_index: u64,
    pub state: SimState,
    /// Grayscale PNG of class ids.
    pub labels_png: String,
    /// RGB PNG of the flat-colour frame.
    pub frame_png: String,
    pub graph: SceneGraph,
}

impl ObservationMsg {
    pub fn new(session_id: &str, seq: Option<u64>, obs: &Observation) -> Self {
        Self {
            v: WIRE_VERSION,
            session_id: session_id.to_string(),
            seq,
            frame_index: obs.frame_index,
            state: obs.state.clone(),
            labels_png: STANDARD.encode(encode_label_png(&obs.labels)),
            frame_png: STANDARD.encode(encode_frame_png(&obs.sim_frame)),
            graph: obs.graph.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub v: u32,
    pub session_id: String,
    pub observation: ObservationMsg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptResponse {
    pub v: u32,
    pub script: KinematicScript,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionList {
    pub v: u32,
    pub sessions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMsg {
    pub v: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    pub error: ErrorBody,
}

impl ErrorMsg {
    pub fn new(kind: &str, message: impl ToString) -> Self {
        Self {
            v: WIRE_VERSION,
            seq: None,
            error: ErrorBody {
                kind: kind.into(),
                message: message.to_string(),
            },
        }
    }

    pub fn from_session(e: &SessionError) -> Self {
        Self::new(e.kind(), e)
    }

    pub fn with_seq(mut self, seq: Option<u64>) -> Self {
        self.seq = seq;
        self
    }
}

/// Client → server messages on the WebSocket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMsg {
    Step {
        #[serde(default = "wire_version")]
        v: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
        action: Action,
    },
    Reset {
        #[serde(default = "wire_version")]
        v: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    Query {
        #[serde(default = "wire_version")]
        v: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
}

impl ClientMsg {
    pub fn version(&self) -> u32 {
        match self {
            ClientMsg::Step { v, .. } | ClientMsg::Reset { v, .. } | ClientMsg::Query { v, .. } => *v,
        }
    }

    pub fn seq(&self) -> Option<u64> {
        match self {
            ClientMsg::Step { seq, .. } | ClientMsg::Reset { seq, .. } | ClientMsg::Query { seq, .. } => *seq,
        }
    }
}

/// Server → client messages on the WebSocket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum ServerMsg {
    Observation(ObservationMsg),
    Error(ErrorMsg),
}
