use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use http_body_util::BodyExt;
use phacosim_core::dataio::{decode_label_png, encode_label_png};
use phacosim_core::geometry::{CoordinateMap, Vec2};
use phacosim_core::kinex::{ToolClass, ToolState};
use phacosim_core::renderer::ToolLibrary;
use phacosim_core::scenegraph::default_class_names;
use phacosim_core::session::{Checkpoint, SessionManager};
use phacosim_core::simulator::{generate_ood_scenario, Action, MotionPrimitive, OodRequest, ScenarioSpec, ToolAction};
use phacosim_server::http::{router, AppState};
use phacosim_server::wire::{CreateResponse, ErrorMsg, Handshake, ObservationMsg, ScriptResponse};
use serde_json::{json, Value};
use tower::ServiceExt;

fn new_app() -> (Router, Arc<SessionManager>) {
    let map = CoordinateMap::square(64, 1.0);
    let sessions = Arc::new(SessionManager::new(map, ToolLibrary::builtin()));
    let state = Arc::new(AppState {
        sessions: sessions.clone(),
        handshake: Handshake::new(&map, 4.0, default_class_names()),
    });
    (router(state), sessions)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn create(app: &Router) -> String {
    let (status, body) = call(app, "POST", "/v1/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    serde_json::from_slice::<CreateResponse>(&body).unwrap().session_id
}

fn step_body(action: &Action, seq: u64) -> Value {
    json!({"v": 1, "seq": seq, "action": action})
}

#[tokio::test]
async fn handshake_describes_the_pixel_mapping() {
    let (app, _) = new_app();
    let (status, body) = call(&app, "GET", "/v1/handshake", None).await;
    assert_eq!(status, StatusCode::OK);
    let h: Handshake = serde_json::from_slice(&body).unwrap();
    assert_eq!((h.v, h.width, h.pixels_per_unit), (1, 64, 32.0));
    assert_eq!(h.class_names[&3], "pupil");
}

#[tokio::test]
async fn zero_steps_export_replays_to_the_served_rasters() {
    let (app, sessions) = new_app();
    let id = create(&app).await;
    let mut served = Vec::new();
    for seq in 0..3 {
        let (status, body) = call(
            &app,
            "POST",
            &format!("/v1/sessions/{id}/step"),
            Some(step_body(&Action::default(), seq)),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        let obs: ObservationMsg = serde_json::from_slice(&body).unwrap();
        assert_eq!((obs.seq, obs.frame_index), (Some(seq), seq + 1));
        served.push(decode_label_png(&STANDARD.decode(&obs.labels_png).unwrap(), "wire".as_ref()).unwrap());
    }
    let (status, body) = call(&app, "GET", &format!("/v1/sessions/{id}/export"), None).await;
    assert_eq!(status, StatusCode::OK);
    let script = serde_json::from_slice::<ScriptResponse>(&body).unwrap().script;
    let spec = ScenarioSpec::nominal(sessions.map());
    let (_, replayed) = sessions.simulator_for(&spec).replay(&script).unwrap();
    assert_eq!(&replayed[1..], &served[..]);

    let (status, body) = call(&app, "GET", &format!("/v1/sessions/{id}/export?format=jsonl"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().starts_with("{\"record\":\"header\""));
}

#[tokio::test]
async fn wire_bytes_equal_in_process_serialization() {
    let (app, sessions) = new_app();
    let id = create(&app).await;
    let tool = ToolState::new(ToolClass::PHACO_HANDPIECE, Vec2::new(0.2, 0.1), 2.5);
    let action = Action::tool(ToolAction::spawn(tool));
    let (_, body) = call(
        &app,
        "POST",
        &format!("/v1/sessions/{id}/step"),
        Some(step_body(&action, 9)),
    )
    .await;
    let in_process = ObservationMsg::new(&id, Some(9), &sessions.observe(&id).unwrap());
    assert_eq!(body, serde_json::to_vec(&in_process).unwrap());

    let (_, body) = call(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    let obs: ObservationMsg = serde_json::from_slice(&body).unwrap();
    let labels = sessions.observe(&id).unwrap().labels;
    assert_eq!(STANDARD.decode(&obs.labels_png).unwrap(), encode_label_png(&labels));
    assert!(obs
        .graph
        .nodes
        .iter()
        .any(|n| n.class_id == ToolClass::PHACO_HANDPIECE.label()));
}

#[tokio::test]
async fn failed_steps_change_nothing() {
    let (app, _) = new_app();
    let id = create(&app).await;
    let step = format!("/v1/sessions/{id}/step");
    call(&app, "POST", &step, Some(step_body(&Action::default(), 0))).await;

    let bad = Action::tool(ToolAction::delta(ToolClass::KERATOME).tip(Vec2::new(0.1, 0.0)));
    let (status, body) = call(&app, "POST", &step, Some(step_body(&bad, 1))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let err: ErrorMsg = serde_json::from_slice(&body).unwrap();
    assert_eq!((err.error.kind.as_str(), err.seq), ("UnknownToolClass", Some(1)));

    let (status, _) = call(&app, "POST", &step, Some(json!({"v": 1, "action": {"tools": 5}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) = call(&app, "POST", &step, Some(json!({"v": 2, "action": {}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(
        serde_json::from_slice::<ErrorMsg>(&body).unwrap().error.kind,
        "UnsupportedVersion"
    );

    let (_, body) = call(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(serde_json::from_slice::<ObservationMsg>(&body).unwrap().frame_index, 1);
}

#[tokio::test]
async fn unknown_sessions_are_404() {
    let (app, _) = new_app();
    for (method, uri) in [
        ("GET", "/v1/sessions/00000000-0000-0000-0000-000000000000"),
        ("POST", "/v1/sessions/nope/reset"),
        ("GET", "/v1/sessions/nope/export"),
        ("DELETE", "/v1/sessions/nope"),
    ] {
        let (status, body) = call(&app, method, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{method} {uri}");
        assert_eq!(
            serde_json::from_slice::<ErrorMsg>(&body).unwrap().error.kind,
            "UnknownSession"
        );
    }
}

#[tokio::test]
async fn reset_list_delete() {
    let (app, _) = new_app();
    let id = create(&app).await;
    call(
        &app,
        "POST",
        &format!("/v1/sessions/{id}/step"),
        Some(step_body(&Action::default(), 0)),
    )
    .await;
    let (_, body) = call(&app, "POST", &format!("/v1/sessions/{id}/reset"), None).await;
    assert_eq!(serde_json::from_slice::<ObservationMsg>(&body).unwrap().frame_index, 0);
    let (_, body) = call(&app, "GET", "/v1/sessions", None).await;
    assert_eq!(serde_json::from_slice::<Value>(&body).unwrap()["sessions"], json!([id]));
    assert_eq!(
        call(&app, "DELETE", &format!("/v1/sessions/{id}"), None).await.0,
        StatusCode::NO_CONTENT
    );
    assert_eq!(
        call(&app, "GET", &format!("/v1/sessions/{id}"), None).await.0,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn checkpoint_restores_on_another_server() {
    let (app, _) = new_app();
    let id = create(&app).await;
    let spawn = Action::tool(ToolAction::spawn(ToolState::new(
        ToolClass::KERATOME,
        Vec2::new(-0.3, 0.2),
        0.4,
    )));
    call(
        &app,
        "POST",
        &format!("/v1/sessions/{id}/step"),
        Some(step_body(&spawn, 0)),
    )
    .await;
    let (_, before) = call(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    let (status, body) = call(&app, "GET", &format!("/v1/sessions/{id}/checkpoint"), None).await;
    assert_eq!(status, StatusCode::OK);
    let cp: Checkpoint = serde_json::from_slice(&body).unwrap();

    let (other, _) = new_app();
    let (status, _) = call(
        &other,
        "POST",
        "/v1/sessions/restore",
        Some(serde_json::to_value(&cp).unwrap()),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let (_, after) = call(&other, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(before, after);
}

#[tokio::test]
async fn ood_endpoint_matches_library() {
    let (app, _) = new_app();
    let req = OodRequest {
        tool_classes: vec![ToolClass::PHACO_HANDPIECE, ToolClass::CAPSULORHEXIS_FORCEPS],
        entry_angles: vec![0.5, 2.5],
        motion: MotionPrimitive::Sweep,
        seed: 4,
        base_anatomy: phacosim_core::kinex::AnatomyState::nominal(),
        bounds: CoordinateMap::square(64, 1.0).image_bounds(),
        frames: 12,
        fps: 4.0,
    };
    let mut body = serde_json::to_value(&req).unwrap();
    body["v"] = json!(1);
    let (status, resp) = call(&app, "POST", "/v1/ood", Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    let script = serde_json::from_slice::<ScriptResponse>(&resp).unwrap().script;
    assert_eq!(script, generate_ood_scenario(&req).unwrap());

    let mut bad = serde_json::to_value(&req).unwrap();
    bad["entry_angles"] = json!([0.5]);
    let (status, resp) = call(&app, "POST", "/v1/ood", Some(bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(
        serde_json::from_slice::<ErrorMsg>(&resp).unwrap().error.kind,
        "InvalidRequest"
    );
}
