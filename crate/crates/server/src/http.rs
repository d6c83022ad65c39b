//! HTTP and WebSocket front end over a [`SessionManager`].
//!
//! | method | path | body → reply |
//! |---|---|---|
//! | GET | `/v1/handshake` | → [`Handshake`] |
//! | GET | `/v1/sessions` | → [`SessionList`] |
//! | POST | `/v1/sessions` | [`CreateRequest`] → [`CreateResponse`] |
//! | POST | `/v1/sessions/restore` | [`Checkpoint`] → [`CreateResponse`] |
//! | GET | `/v1/sessions/{id}` | → [`ObservationMsg`] |
//! | DELETE | `/v1/sessions/{id}` | → 204 |
//! | POST | `/v1/sessions/{id}/step` | [`StepRequest`] → [`ObservationMsg`] |
//! | POST | `/v1/sessions/{id}/reset` | → [`ObservationMsg`] |
//! | GET | `/v1/sessions/{id}/export` | → [`ScriptResponse`], or JSONL with `?format=jsonl` |
//! | GET | `/v1/sessions/{id}/checkpoint` | → [`Checkpoint`] |
//! | GET | `/v1/sessions/{id}/ws` | WebSocket of [`ClientMsg`] / [`ServerMsg`] |
//! | POST | `/v1/ood` | [`OodMsg`] → [`ScriptResponse`] |
//!
//! Failures reply with an [`ErrorMsg`].

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use phacosim_core::dataio::write_script;
use phacosim_core::session::{Checkpoint, SessionError, SessionManager};
use phacosim_core::simulator::{generate_ood_scenario, OodRequest, ScenarioSpec, SimError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::wire::{
    ClientMsg, CreateRequest, CreateResponse, ErrorMsg, Handshake, ObservationMsg, ScriptResponse, ServerMsg,
    SessionList, StepRequest, WIRE_VERSION,
};

pub struct AppState {
    pub sessions: Arc<SessionManager>,
    pub handshake: Handshake,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodMsg {
    #[serde(default = "default_v")]
    pub v: u32,
    #[serde(flatten)]
    pub request: OodRequest,
}

fn default_v() -> u32 {
    WIRE_VERSION
}

pub struct ApiError(StatusCode, ErrorMsg);

impl ApiError {
    fn bad_request(kind: &str, message: impl ToString) -> Self {
        Self(StatusCode::BAD_REQUEST, ErrorMsg::new(kind, message))
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::UnknownSession(_) => StatusCode::NOT_FOUND,
            SessionError::Sim(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Data(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self(status, ErrorMsg::from_session(&e))
    }
}

impl From<SimError> for ApiError {
    fn from(e: SimError) -> Self {
        SessionError::Sim(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("BadRequest", e))
}

fn check_version(v: u32) -> ApiResult<()> {
    if v == WIRE_VERSION {
        Ok(())
    } else {
        Err(ApiError::bad_request(
            "UnsupportedVersion",
            format!("message version {v}, server speaks {WIRE_VERSION}"),
        ))
    }
}

/// Runs engine work off the async executor.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| {
        ApiError(
            StatusCode::INTERNAL_SERVER_ERROR,
            ErrorMsg::new("Internal", format!("worker failed: {e}")),
        )
    })?
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/handshake", get(handshake))
        .route("/v1/sessions", get(list).post(create))
        .route("/v1/sessions/restore", post(restore))
        .route("/v1/sessions/{id}", get(query).delete(remove))
        .route("/v1/sessions/{id}/step", post(step))
        .route("/v1/sessions/{id}/reset", post(reset))
        .route("/v1/sessions/{id}/export", get(export))
        .route("/v1/sessions/{id}/checkpoint", get(checkpoint))
        .route("/v1/sessions/{id}/ws", get(ws))
        .route("/v1/ood", post(ood))
        .with_state(state)
}

async fn handshake(State(app): State<Arc<AppState>>) -> Json<Handshake> {
    Json(app.handshake.clone())
}

async fn list(State(app): State<Arc<AppState>>) -> Json<SessionList> {
    Json(SessionList {
        v: WIRE_VERSION,
        sessions: app.sessions.ids(),
    })
}

fn created(sessions: &SessionManager, id: String) -> ApiResult<(StatusCode, Json<CreateResponse>)> {
    let obs = sessions.observe(&id)?;
    Ok((
        StatusCode::CREATED,
        Json(CreateResponse {
            v: WIRE_VERSION,
            observation: ObservationMsg::new(&id, None, &obs),
            session_id: id,
        }),
    ))
}

async fn create(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<CreateResponse>)> {
    let req: CreateRequest = if body.iter().all(u8::is_ascii_whitespace) {
        CreateRequest::default()
    } else {
        parse(&body)?
    };
    check_version(req.v)?;
    let sessions = app.sessions.clone();
    blocking(move || {
        let spec = req.scenario.unwrap_or_else(|| ScenarioSpec::nominal(sessions.map()));
        let id = sessions.create(spec)?;
        created(&sessions, id)
    })
    .await
}

async fn restore(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<CreateResponse>)> {
    let cp: Checkpoint = parse(&body)?;
    let sessions = app.sessions.clone();
    blocking(move || {
        let id = sessions.restore(&cp)?;
        created(&sessions, id)
    })
    .await
}

async fn query(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<ObservationMsg>> {
    let sessions = app.sessions.clone();
    blocking(move || Ok(Json(ObservationMsg::new(&id, None, &sessions.observe(&id)?)))).await
}

async fn remove(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    app.sessions.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn step(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<ObservationMsg>> {
    let req: StepRequest = parse(&body)?;
    check_version(req.v)?;
    let sessions = app.sessions.clone();
    blocking(move || {
        let obs = sessions
            .step(&id, &req.action)
            .map_err(|e| ApiError::from(e).with_seq(req.seq))?;
        Ok(Json(ObservationMsg::new(&id, req.seq, &obs)))
    })
    .await
}

impl ApiError {
    fn with_seq(mut self, seq: Option<u64>) -> Self {
        self.1.seq = seq;
        self
    }
}

async fn reset(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<ObservationMsg>> {
    let sessions = app.sessions.clone();
    blocking(move || Ok(Json(ObservationMsg::new(&id, None, &sessions.reset(&id)?)))).await
}

async fn export(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let fps = app.handshake.fps;
    let jsonl = match params.get("format").map(String::as_str) {
        None | Some("json") => false,
        Some("jsonl") => true,
        Some(other) => return Err(ApiError::bad_request("BadRequest", format!("unknown format `{other}`"))),
    };
    let sessions = app.sessions.clone();
    blocking(move || {
        let script = sessions.export(&id, fps)?;
        Ok(if jsonl {
            ([(header::CONTENT_TYPE, "application/x-ndjson")], write_script(&script)).into_response()
        } else {
            Json(ScriptResponse {
                v: WIRE_VERSION,
                script,
            })
            .into_response()
        })
    })
    .await
}

async fn checkpoint(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Checkpoint>> {
    Ok(Json(app.sessions.checkpoint(&id)?))
}

async fn ood(body: Bytes) -> ApiResult<Json<ScriptResponse>> {
    let msg: OodMsg = parse(&body)?;
    check_version(msg.v)?;
    blocking(move || {
        Ok(Json(ScriptResponse {
            v: WIRE_VERSION,
            script: generate_ood_scenario(&msg.request)?,
        }))
    })
    .await
}

async fn ws(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    upgrade: WebSocketUpgrade,
) -> ApiResult<Response> {
    app.sessions.info(&id)?;
    let sessions = app.sessions.clone();
    Ok(upgrade.on_upgrade(move |socket| step_stream(socket, sessions, id)))
}

/// Handles one client's messages strictly in arrival order.
async fn step_stream(mut socket: WebSocket, sessions: Arc<SessionManager>, id: String) {
    while let Some(Ok(message)) = socket.recv().await {
        let text = match message {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let reply = match serde_json::from_str::<ClientMsg>(&text) {
            Err(e) => ServerMsg::Error(ErrorMsg::new("BadRequest", e)),
            Ok(msg) if msg.version() != WIRE_VERSION => ServerMsg::Error(
                ErrorMsg::new("UnsupportedVersion", format!("message version {}", msg.version())).with_seq(msg.seq()),
            ),
            Ok(msg) => {
                let (sessions, id) = (sessions.clone(), id.clone());
                tokio::task::spawn_blocking(move || {
                    let seq = msg.seq();
                    let result = match &msg {
                        ClientMsg::Step { action, .. } => sessions.step(&id, action),
                        ClientMsg::Reset { .. } => sessions.reset(&id),
                        ClientMsg::Query { .. } => sessions.observe(&id),
                    };
                    match result {
                        Ok(obs) => ServerMsg::Observation(ObservationMsg::new(&id, seq, &obs)),
                        Err(e) => ServerMsg::Error(ErrorMsg::from_session(&e).with_seq(seq)),
                    }
                })
                .await
                .unwrap_or_else(|e| ServerMsg::Error(ErrorMsg::new("Internal", e)))
            }
        };
        let text = serde_json::to_string(&reply).expect("server messages serialize");
        if socket.send(Message::Text(text.into())).await.is_err() {
            break;
        }
    }
}
