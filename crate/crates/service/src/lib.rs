//! HTTP service for the what-if loop: sessions hold an instance, its edit
//! history and user background facts; solving and explanations run on the
//! current (instance + background) pair.
//!
//! Every mutating or solving request on a session holds that session
//! exclusively; a second one arriving meanwhile gets 409. Reads never wait.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use medsched_core::edit::{apply_edits, EditOp};
use medsched_core::engine::{SolveConfig, SolveStatus};
use medsched_core::explain::{ExplainConfig, ExplainError, Reanalysis};
use medsched_core::io::{
    parse_instance, session_doc, write_explanation, write_instance, write_solution, ExplanationDoc,
    Instance, SolutionDoc,
};
use medsched_core::pipeline::{replay_session, PipelineError, Prepared};

pub const DEFAULT_TIME_LIMIT_SECS: f64 = 60.0;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Applied when a request does not name its own limit.
    pub default_time_limit: Duration,
    /// When set, sessions are saved there after every change and reloaded
    /// at startup.
    pub state_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            default_time_limit: Duration::from_secs_f64(DEFAULT_TIME_LIMIT_SECS),
            state_dir: None,
        }
    }
}

/// Error body `{"error": message}` with its status code.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl ToString) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, message.to_string())
    }

    fn not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, format!("no session `{id}`"))
    }

    fn internal(message: impl ToString) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Explain(ExplainError::Timeout)
            | PipelineError::NoSolution
            | PipelineError::NotOptimal => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
            PipelineError::Engine(_) => ApiError::internal(e),
            _ => ApiError::bad_request(e),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Result of the latest solve and the session revision it was computed on.
#[derive(Clone, Debug)]
struct Outcome {
    revision: u64,
    status: SolveStatus,
    solution: Option<SolutionDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Persisted {
    id: String,
    /// Instance document as created.
    initial: Value,
    edits: Vec<EditOp>,
    background: Vec<String>,
}

#[derive(Debug)]
struct SessionData {
    initial: Instance,
    instance: Instance,
    edits: Vec<EditOp>,
    background: Vec<String>,
    /// Bumped on every edit or background addition.
    revision: u64,
    outcome: Option<Outcome>,
}

#[derive(Debug)]
struct Session {
    busy: AtomicBool,
    data: Mutex<SessionData>,
}

/// Exclusive hold on a session for one request.
struct Hold(Arc<Session>);

impl Drop for Hold {
    fn drop(&mut self) {
        self.0.busy.store(false, Ordering::Release);
    }
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    config: ServiceConfig,
    sessions: Mutex<BTreeMap<String, Arc<Session>>>,
    next_id: AtomicU64,
}

impl AppState {
    /// Fresh store, reloading saved sessions when a state directory is set.
    pub fn new(config: ServiceConfig) -> std::io::Result<Self> {
        let mut sessions = BTreeMap::new();
        let mut highest = 0;
        if let Some(dir) = &config.state_dir {
            std::fs::create_dir_all(dir)?;
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            paths.sort();
            for path in paths {
                let text = std::fs::read_to_string(&path)?;
                let saved: Persisted = serde_json::from_str(&text)
                    .map_err(|e| invalid_data(format!("{}: {e}", path.display())))?;
                let data = restore(&saved).map_err(|e| invalid_data(format!("{}: {e}", path.display())))?;
                if let Some(n) = saved.id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                    highest = highest.max(n);
                }
                sessions.insert(
                    saved.id.clone(),
                    Arc::new(Session {
                        busy: AtomicBool::new(false),
                        data: Mutex::new(data),
                    }),
                );
            }
        }
        Ok(AppState {
            inner: Arc::new(Inner {
                config,
                sessions: Mutex::new(sessions),
                next_id: AtomicU64::new(highest + 1),
            }),
        })
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Session>> {
        self.inner
            .sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn hold(&self, id: &str) -> ApiResult<Hold> {
        let session = self.session(id)?;
        if session
            .busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("session `{id}` is busy with another request"),
            ));
        }
        Ok(Hold(session))
    }

    fn persist(&self, id: &str, data: &SessionData) -> ApiResult<()> {
        let Some(dir) = &self.inner.config.state_dir else {
            return Ok(());
        };
        let saved = Persisted {
            id: id.to_string(),
            initial: document_value(&write_instance(&data.initial)),
            edits: data.edits.clone(),
            background: data.background.clone(),
        };
        let text = serde_json::to_string_pretty(&saved).map_err(ApiError::internal)? + "\n";
        // Write-then-rename so a crash never leaves a truncated session.
        let tmp = dir.join(format!("{id}.json.tmp"));
        std::fs::write(&tmp, text).map_err(ApiError::internal)?;
        std::fs::rename(&tmp, dir.join(format!("{id}.json"))).map_err(ApiError::internal)
    }

    fn time_limit(&self, secs: Option<f64>) -> ApiResult<Duration> {
        match secs {
            None => Ok(self.inner.config.default_time_limit),
            Some(s) if s.is_finite() && s >= 0.0 => Ok(Duration::from_secs_f64(s)),
            Some(s) => Err(ApiError::bad_request(format!("time_limit must be a non-negative number of seconds, got {s}"))),
        }
    }
}

fn invalid_data(message: String) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, message)
}

fn restore(saved: &Persisted) -> Result<SessionData, String> {
    let initial = parse_instance(&saved.initial.to_string()).map_err(|e| e.to_string())?;
    let instance = apply_edits(&initial, &saved.edits).map_err(|e| e.to_string())?;
    Ok(SessionData {
        initial,
        instance,
        edits: saved.edits.clone(),
        background: saved.background.clone(),
        revision: 0,
        outcome: None,
    })
}

/// Documents are canonical JSON text; responses embed them as values.
fn document_value(text: &str) -> Value {
    serde_json::from_str(text).expect("documents are JSON")
}

fn explanation_value(doc: &ExplanationDoc) -> Value {
    document_value(&write_explanation(doc))
}

fn outcome_value(outcome: &Outcome, revision: u64) -> Value {
    json!({
        "status": outcome.status,
        "objective": outcome.solution.as_ref().map(|s| s.schedule.objective().clone()),
        "solution": outcome.solution.as_ref().map(|s| document_value(&write_solution(s))),
        "stale": outcome.revision != revision,
    })
}

fn state_value(id: &str, session: &Session) -> Value {
    let data = session.data.lock().unwrap();
    json!({
        "id": id,
        "kind": data.instance.kind(),
        "instance": document_value(&write_instance(&data.instance)),
        "edits": data.edits,
        "background": data.background,
        "outcome": data.outcome.as_ref().map(|o| outcome_value(o, data.revision)),
        "busy": session.busy.load(Ordering::Acquire),
    })
}

/// Runs CPU-bound work off the async runtime.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/solve", post(solve))
        .route("/sessions/{id}/edits", post(edit))
        .route("/sessions/{id}/explain-unsat", post(explain_unsat))
        .route("/sessions/{id}/explain-why", post(explain_why))
        .route("/sessions/{id}/explain-contrast", post(explain_contrast))
        .route("/sessions/{id}/background", post(add_background))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::new(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("medsched service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn create_session(
    State(app): State<AppState>,
    body: Result<Json<Value>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(doc) = body?;
    let instance = parse_instance(&doc.to_string()).map_err(ApiError::bad_request)?;
    let id = format!("s{}", app.inner.next_id.fetch_add(1, Ordering::Relaxed));
    let data = SessionData {
        initial: instance.clone(),
        instance,
        edits: Vec::new(),
        background: Vec::new(),
        revision: 0,
        outcome: None,
    };
    app.persist(&id, &data)?;
    let session = Arc::new(Session {
        busy: AtomicBool::new(false),
        data: Mutex::new(data),
    });
    app.inner.sessions.lock().unwrap().insert(id.clone(), session.clone());
    Ok((StatusCode::CREATED, Json(state_value(&id, &session))))
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = app.session(&id)?;
    Ok(Json(state_value(&id, &session)))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveRequest {
    #[serde(default)]
    time_limit: Option<f64>,
    #[serde(default)]
    node_limit: Option<u64>,
}

/// Current instance and background, captured under the session lock.
fn snapshot(hold: &Hold) -> (Instance, Vec<String>, u64) {
    let data = hold.0.data.lock().unwrap();
    (data.instance.clone(), data.background.clone(), data.revision)
}

fn optional_body<T: Default>(body: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    match body {
        Ok(Json(v)) => Ok(v),
        Err(JsonRejection::MissingJsonContentType(_)) => Ok(T::default()),
        Err(e) => Err(e.into()),
    }
}

async fn solve(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<SolveRequest>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let req = optional_body(body)?;
    let hold = app.hold(&id)?;
    let config = SolveConfig {
        time_limit: app.time_limit(req.time_limit)?,
        node_limit: req.node_limit,
    };
    let (instance, background, revision) = snapshot(&hold);
    let report = blocking(move || {
        let prepared = Prepared::with_background(&instance, &background)?;
        Ok(prepared.solve(&config)?)
    })
    .await?;
    let outcome = Outcome {
        revision,
        status: report.outcome.status,
        solution: report.document(),
    };
    let mut data = hold.0.data.lock().unwrap();
    let body = outcome_value(&outcome, data.revision);
    data.outcome = Some(outcome);
    Ok(Json(body))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EditRequest {
    ops: Vec<EditOp>,
}

async fn edit(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<EditRequest>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let hold = app.hold(&id)?;
    let Json(req) = body?;
    {
        let mut data = hold.0.data.lock().unwrap();
        let edited = apply_edits(&data.instance, &req.ops).map_err(ApiError::bad_request)?;
        data.instance = edited;
        data.edits.extend(req.ops);
        data.revision += 1;
        app.persist(&id, &data)?;
    }
    Ok(Json(state_value(&id, &hold.0)))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplainRequest {
    #[serde(default)]
    time_limit: Option<f64>,
}

fn explain_config(app: &AppState, secs: Option<f64>) -> ApiResult<ExplainConfig> {
    Ok(ExplainConfig {
        solve: SolveConfig::with_secs(app.time_limit(secs)?.as_secs_f64()),
        ..ExplainConfig::default()
    })
}

async fn explain_unsat(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ExplainRequest>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let req = optional_body(body)?;
    let hold = app.hold(&id)?;
    let config = explain_config(&app, req.time_limit)?;
    let (instance, background, _) = snapshot(&hold);
    let doc = blocking(move || {
        let prepared = Prepared::with_background(&instance, &background)?;
        Ok(prepared.explain_unsat(&config)?.1)
    })
    .await?;
    Ok(Json(explanation_value(&doc)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WhyRequest {
    atoms: Vec<String>,
    #[serde(default)]
    time_limit: Option<f64>,
}

async fn explain_why(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<WhyRequest>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let hold = app.hold(&id)?;
    let Json(req) = body?;
    let config = explain_config(&app, req.time_limit)?;
    let (instance, background, _) = snapshot(&hold);
    let doc = blocking(move || {
        let prepared = Prepared::with_background(&instance, &background)?;
        Ok(prepared.explain_why(&req.atoms, &config)?.2)
    })
    .await?;
    Ok(Json(explanation_value(&doc)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContrastRequest {
    a: String,
    b: String,
    #[serde(default)]
    time_limit: Option<f64>,
}

async fn explain_contrast(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ContrastRequest>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let hold = app.hold(&id)?;
    let Json(req) = body?;
    let config = explain_config(&app, req.time_limit)?;
    let (instance, background, _) = snapshot(&hold);
    let doc = blocking(move || {
        let prepared = Prepared::with_background(&instance, &background)?;
        Ok(prepared.explain_contrast(&req.a, &req.b, &config)?.1)
    })
    .await?;
    Ok(Json(explanation_value(&doc)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackgroundRequest {
    facts: Vec<String>,
    #[serde(default)]
    time_limit: Option<f64>,
}

/// Appends background facts and re-analyses the whole session; the facts
/// are kept only if every one of them parses.
async fn add_background(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<BackgroundRequest>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let hold = app.hold(&id)?;
    let Json(req) = body?;
    let config = explain_config(&app, req.time_limit)?;
    let (instance, mut background, _) = snapshot(&hold);
    background.extend(req.facts);
    let kind = instance.kind();
    let (session, background) = blocking(move || {
        let session = replay_session(&instance, &background, &config)?;
        Ok((session, background))
    })
    .await?;
    let consistent = !matches!(
        session.history.last().map(|h| &h.outcome),
        Some(Reanalysis::Inconsistent(_))
    );
    {
        let mut data = hold.0.data.lock().unwrap();
        data.background = background;
        data.revision += 1;
        app.persist(&id, &data)?;
    }
    Ok(Json(json!({
        "consistent": consistent,
        "explanation": explanation_value(&session_doc(kind, &session)),
    })))
}
