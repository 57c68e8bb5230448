//! Wire-level tests: requests go through the router exactly as they would
//! over HTTP.

use std::path::PathBuf;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use medsched_core::engine::SolveConfig;
use medsched_core::io::{parse_instance, parse_solution, write_solution};
use medsched_core::pipeline::Prepared;
use medsched_service::{router, AppState, ServiceConfig};

fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    std::fs::read_to_string(path).unwrap()
}

fn app_with(config: ServiceConfig) -> Router {
    router(AppState::new(config).unwrap())
}

fn app() -> Router {
    app_with(ServiceConfig {
        default_time_limit: Duration::from_secs(30),
        state_dir: None,
    })
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn create(app: &Router, fixture_name: &str) -> String {
    let doc: Value = serde_json::from_str(&fixture(fixture_name)).unwrap();
    let (status, body) = call(app, "POST", "/sessions", Some(doc)).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn health_reports_ok() {
    let (status, body) = call(&app(), "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
}

#[tokio::test]
async fn service_solve_matches_direct_solve() {
    let app = app();
    for name in ["cts-small.json", "ors-small.json", "poac-small.json"] {
        let id = create(&app, name).await;
        let (status, solved) = call(&app, "POST", &format!("/sessions/{id}/solve"), Some(json!({}))).await;
        assert_eq!(status, StatusCode::OK, "{solved}");
        let (_, state) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
        assert_eq!(state["outcome"]["stale"], false);
        assert_eq!(state["outcome"]["status"], "optimal");

        let instance = parse_instance(&fixture(name)).unwrap();
        let direct = Prepared::new(&instance).unwrap().solve(&SolveConfig::with_secs(30.0)).unwrap();
        let doc = direct.document().unwrap();
        let served = parse_solution(&state["outcome"]["solution"].to_string()).unwrap();
        assert_eq!(served, doc, "{name}");
        assert_eq!(write_solution(&served), write_solution(&doc));
        assert_eq!(state["outcome"]["objective"], serde_json::to_value(doc.schedule.objective()).unwrap());
    }
}

#[tokio::test]
async fn edits_mark_the_outcome_stale_and_replay() {
    let app = app();
    let id = create(&app, "ors-unsat.json").await;
    let (_, solved) = call(&app, "POST", &format!("/sessions/{id}/solve"), None).await;
    assert_eq!(solved["status"], "unsat");
    assert_eq!(solved["solution"], Value::Null);

    let (status, mus) = call(&app, "POST", &format!("/sessions/{id}/explain-unsat"), None).await;
    assert_eq!(status, StatusCode::OK, "{mus}");
    assert_eq!(mus["format"], "medsched/explanation");
    let labels: Vec<&str> = mus["body"]["entries"].as_array().unwrap().iter().map(|e| e["label"].as_str().unwrap()).collect();
    assert!(labels.iter().any(|l| l.contains("r2")), "{labels:?}");

    let patch: Value = serde_json::from_str(&fixture("ors-unsat-whatif.json")).unwrap();
    let (status, state) = call(&app, "POST", &format!("/sessions/{id}/edits"), Some(patch)).await;
    assert_eq!(status, StatusCode::OK, "{state}");
    assert_eq!(state["outcome"]["stale"], true);
    assert_eq!(state["edits"].as_array().unwrap().len(), 1);

    let (_, solved) = call(&app, "POST", &format!("/sessions/{id}/solve"), Some(json!({"time_limit": 10}))).await;
    assert_eq!(solved["status"], "optimal");
    assert_eq!(solved["stale"], false);

    let (status, again) = call(&app, "POST", &format!("/sessions/{id}/explain-unsat"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{again}");
}

#[tokio::test]
async fn errors_use_the_documented_status_classes() {
    let app = app();
    let (status, _) = call(&app, "GET", "/sessions/s999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "POST", "/sessions/s999/solve", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, body) = call(&app, "POST", "/sessions", Some(json!({"format": "nope"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].is_string());

    let id = create(&app, "ors-small.json").await;
    let bad_patch = json!({"ops": [{"op": "remove_patient", "id": "p1"}]});
    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/edits"), Some(bad_patch)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    let unknown_op = json!({"ops": [{"op": "rename_everything"}]});
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/edits"), Some(unknown_op)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (_, state) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(state["edits"], json!([]));

    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/explain-unsat"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/explain-why"), Some(json!({"atoms": ["nope=1"]}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/solve"), Some(json!({"time_limit": -1}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn explanations_over_the_wire() {
    let app = app();
    let id = create(&app, "ors-small.json").await;
    let (_, solved) = call(&app, "POST", &format!("/sessions/{id}/solve"), None).await;
    let solution = parse_solution(&solved["solution"].to_string()).unwrap();
    let medsched_core::io::Schedule::Ors(s) = &solution.schedule else { panic!() };
    let first = &s.registrations[0];
    let shift = first.shift.clone().unwrap_or_else(|| "unassigned".into());
    let atom = format!("assign({})={shift}", first.registration);
    let (status, why) = call(&app, "POST", &format!("/sessions/{id}/explain-why"), Some(json!({"atoms": [atom]}))).await;
    assert_eq!(status, StatusCode::OK, "{why}");
    assert_eq!(why["body"]["type"], "justification");

    let other = if shift == "unassigned" { "s1".to_string() } else { "unassigned".to_string() };
    let b = format!("assign({})={other}", first.registration);
    let (status, contrast) = call(&app, "POST", &format!("/sessions/{id}/explain-contrast"), Some(json!({"a": atom, "b": b}))).await;
    assert_eq!(status, StatusCode::OK, "{contrast}");
    assert_eq!(contrast["body"]["type"], "contrast");
}

#[tokio::test]
async fn background_facts_are_reanalysed_and_used_by_solve() {
    let app = app();
    let id = create(&app, "ors-small.json").await;
    let (status, first) = call(&app, "POST", &format!("/sessions/{id}/background"), Some(json!({"facts": ["assign(r1)!=unassigned"]}))).await;
    assert_eq!(status, StatusCode::OK, "{first}");
    assert_eq!(first["consistent"], true);
    let (status, second) = call(&app, "POST", &format!("/sessions/{id}/background"), Some(json!({"facts": ["assign(r1)=unassigned"]}))).await;
    assert_eq!(status, StatusCode::OK, "{second}");
    assert_eq!(second["consistent"], false);
    let steps = second["explanation"]["body"]["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 2);
    let mus: Vec<&str> = steps[1]["mus"].as_array().unwrap().iter().map(|e| e["label"].as_str().unwrap()).collect();
    assert_eq!(mus, vec!["background(1)", "background(2)"]);

    let (_, solved) = call(&app, "POST", &format!("/sessions/{id}/solve"), None).await;
    assert_eq!(solved["status"], "unsat");
    let (_, state) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(state["background"].as_array().unwrap().len(), 2);

    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/background"), Some(json!({"facts": ["gibberish"]}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (_, state) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(state["background"].as_array().unwrap().len(), 2);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_solve_on_one_session_conflicts() {
    let app = app();
    // Tight enough that the solve runs until its limit.
    let big = medsched_core::io::generate(
        medsched_core::io::ProblemKind::Ors,
        &medsched_core::io::GenParams::new(0, 100, 1.2),
    )
    .unwrap();
    let doc: Value = serde_json::from_str(&medsched_core::io::write_instance(&big)).unwrap();
    let (_, created) = call(&app, "POST", "/sessions", Some(doc)).await;
    let id = created["id"].as_str().unwrap().to_string();
    let uri = format!("/sessions/{id}/solve");
    let slow = {
        let app = app.clone();
        let uri = uri.clone();
        tokio::spawn(async move { call(&app, "POST", &uri, Some(json!({"time_limit": 3}))).await })
    };
    let mut saw_busy = false;
    for _ in 0..100 {
        tokio::time::sleep(Duration::from_millis(20)).await;
        let (_, state) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
        if state["busy"] == true {
            saw_busy = true;
            let (status, _) = call(&app, "POST", &uri, Some(json!({"time_limit": 1}))).await;
            assert_eq!(status, StatusCode::CONFLICT);
            let (status, _) = call(&app, "POST", &format!("/sessions/{id}/edits"), Some(json!({"ops": []}))).await;
            assert_eq!(status, StatusCode::CONFLICT);
            break;
        }
    }
    assert!(saw_busy);
    let (status, done) = slow.await.unwrap();
    assert_eq!(status, StatusCode::OK);
    assert_eq!(done["status"], "feasible_timeout");
    let other = create(&app, "cts-small.json").await;
    let (status, _) = call(&app, "POST", &format!("/sessions/{other}/solve"), None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn sessions_survive_a_restart_with_a_state_dir() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        default_time_limit: Duration::from_secs(30),
        state_dir: Some(dir.path().to_path_buf()),
    };
    let app = app_with(config.clone());
    let id = create(&app, "ors-unsat.json").await;
    let patch: Value = serde_json::from_str(&fixture("ors-unsat-whatif.json")).unwrap();
    call(&app, "POST", &format!("/sessions/{id}/edits"), Some(patch)).await;
    let (_, before) = call(&app, "GET", &format!("/sessions/{id}"), None).await;

    let restarted = app_with(config);
    let (status, after) = call(&restarted, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(after["instance"], before["instance"]);
    assert_eq!(after["edits"], before["edits"]);
    let fresh = create(&restarted, "cts-small.json").await;
    assert_ne!(fresh, id);
}
