//! HTTP session API consumed by the assistant UI.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::DefaultBodyLimit;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;

use crate::export::{final_graph_json, ColoredMesh, FinalGraph, SCHEMA_VERSION};
use crate::macro_id::{DecisionError, DecisionInput, DecompositionQuery, IdentifyError, Stage, TopoGraph};
use crate::mesh::Vector;
use crate::segmentation::MachiningSetup;
use crate::session::{Phase, Session, SessionConfig, SessionError, SessionStore};

/// Largest accepted request body (STL uploads).
pub const MAX_UPLOAD: usize = 512 << 20;

/// `None` only while a blocking task owns the session, under the lock.
type Shared = Arc<Mutex<Option<Session>>>;

pub struct AppState {
    store: SessionStore,
    defaults: SessionConfig,
    sessions: Mutex<HashMap<String, Shared>>,
}

impl AppState {
    pub fn new(store: SessionStore, defaults: SessionConfig) -> Arc<Self> {
        Arc::new(AppState { store, defaults, sessions: Mutex::new(HashMap::new()) })
    }

    /// Open session, loading it from disk when the server has not seen it.
    async fn session(&self, id: &str) -> Result<Shared, ApiError> {
        let mut map = self.sessions.lock().await;
        if let Some(s) = map.get(id) {
            return Ok(s.clone());
        }
        let store = self.store.clone();
        let owned = id.to_string();
        let loaded = tokio::task::spawn_blocking(move || store.load(&owned)).await.map_err(ApiError::internal)??;
        let shared = Arc::new(Mutex::new(Some(loaded)));
        map.insert(id.to_string(), shared.clone());
        Ok(shared)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl ToString) -> Self {
        ApiError { status, body: json!({ "schema_version": SCHEMA_VERSION, "error": kind, "message": message.to_string() }) }
    }

    fn internal(e: impl ToString) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::NotFound(_) | SessionError::BadId(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", e),
            SessionError::Mesh(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_mesh", e),
            SessionError::Identify(e) => e.into(),
            other => ApiError::internal(other),
        }
    }
}

impl From<IdentifyError> for ApiError {
    fn from(e: IdentifyError) -> Self {
        match &e {
            IdentifyError::Decision(DecisionError::UnknownQuery(_)) => ApiError::new(StatusCode::CONFLICT, "no_such_query", e),
            IdentifyError::NotFinalized => ApiError::new(StatusCode::CONFLICT, "not_finalized", e),
            IdentifyError::Decision(d) => {
                let mut err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_decision", &e);
                err.body["face_issues"] = json!(d.face_issues());
                err
            }
            IdentifyError::UnknownMacro(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_macro", e),
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "identification_failed", e),
        }
    }
}

/// Optional setup overrides on session creation.
#[derive(Debug, Default, Deserialize)]
pub struct CreateParams {
    /// `x,y,z`.
    pub tool_axis: Option<String>,
    pub theta_bottom: Option<f64>,
    pub theta_flank: Option<f64>,
    pub weld_tol: Option<f64>,
    pub min_feature_faces: Option<usize>,
}

pub fn parse_axis(s: &str) -> Result<Vector, String> {
    let parts: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| format!("bad axis '{s}': {e}"))?;
    match parts.as_slice() {
        [x, y, z] => Ok(Vector::new(*x, *y, *z)),
        _ => Err(format!("bad axis '{s}': expected x,y,z")),
    }
}

impl CreateParams {
    fn config(&self, defaults: SessionConfig) -> Result<SessionConfig, ApiError> {
        let bad = |e: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_setup", e);
        let axis = match &self.tool_axis {
            Some(s) => parse_axis(s).map_err(bad)?,
            None => defaults.setup.tool_axis,
        };
        let setup = MachiningSetup::new(
            axis,
            self.theta_bottom.unwrap_or(defaults.setup.theta_bottom),
            self.theta_flank.unwrap_or(defaults.setup.theta_flank),
        )
        .map_err(|e| bad(e.to_string()))?;
        Ok(SessionConfig {
            setup,
            weld_tol: self.weld_tol.or(defaults.weld_tol),
            min_feature_faces: self.min_feature_faces.unwrap_or(defaults.min_feature_faces),
            ..defaults
        })
    }
}

#[derive(Serialize)]
struct Queries<'a> {
    schema_version: u32,
    phase: Phase,
    queries: &'a [DecompositionQuery],
}

#[derive(Serialize)]
struct GraphSnapshot<'a> {
    schema_version: u32,
    phase: Phase,
    graph: &'a TopoGraph,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_graph: Option<FinalGraph>,
}

async fn persist(state: &AppState, session: Session) -> Result<Session, ApiError> {
    let store = state.store.clone();
    tokio::task::spawn_blocking(move || store.save(&session).map(|_| session)).await.map_err(ApiError::internal)?.map_err(ApiError::from)
}

async fn create(State(state): State<Arc<AppState>>, Query(params): Query<CreateParams>, body: Bytes) -> Result<Response, ApiError> {
    let config = params.config(state.defaults)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let owned = id.clone();
    let session = tokio::task::spawn_blocking(move || Session::from_stl(owned, &body, config)).await.map_err(ApiError::internal)??;
    let session = persist(&state, session).await?;
    let body = session.state();
    state.sessions.lock().await.insert(id, Arc::new(Mutex::new(Some(session))));
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn status(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let shared = state.session(&id).await?;
    let guard = shared.lock().await;
    let s = guard.as_ref().ok_or_else(|| ApiError::internal("session slot empty"))?;
    Ok(Json(s.state()).into_response())
}

/// Runs a blocking step on the session and persists the result.
async fn mutate<T: Send + 'static>(
    state: &Arc<AppState>,
    id: &str,
    f: impl FnOnce(&mut Session) -> Result<T, SessionError> + Send + 'static,
) -> Result<(T, crate::session::SessionState), ApiError> {
    let shared = state.session(id).await?;
    let mut guard = shared.lock().await;
    let mut session = guard.take().ok_or_else(|| ApiError::internal("session slot empty"))?;
    let store = state.store.clone();
    let joined = tokio::task::spawn_blocking(move || {
        let out = f(&mut session).and_then(|t| store.save(&session).map(|_| t));
        (session, out)
    })
    .await;
    let (session, out) = match joined {
        Ok(done) => done,
        Err(e) => {
            // The last snapshot on disk is the state before this request.
            *guard = state.store.load(id).ok();
            return Err(ApiError::internal(e));
        }
    };
    let body = session.state();
    *guard = Some(session);
    Ok((out?, body))
}

async fn advance(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let (_, body) = mutate(&state, &id, |s| s.advance().map(|_| ())).await?;
    Ok(Json(body).into_response())
}

async fn queries(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let shared = state.session(&id).await?;
    let guard = shared.lock().await;
    let s = guard.as_ref().ok_or_else(|| ApiError::internal("session slot empty"))?;
    Ok(Json(Queries { schema_version: SCHEMA_VERSION, phase: s.phase, queries: &s.graph.queries }).into_response())
}

async fn decide(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    input: Result<Json<DecisionInput>, JsonRejection>,
) -> Result<Response, ApiError> {
    // Resolve the session first so an unknown id is a 404 whatever the body.
    state.session(&id).await?;
    let Json(input) = input.map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_json", e.body_text()))?;
    let (_, body) = mutate(&state, &id, move |s| s.decide(input)).await?;
    Ok(Json(body).into_response())
}

async fn mesh(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let shared = state.session(&id).await?;
    let guard = shared.lock().await;
    let s = guard.as_ref().ok_or_else(|| ApiError::internal("session slot empty"))?;
    Ok(Json(ColoredMesh::new(&s.identifier.mesh.mesh, &s.graph)).into_response())
}

#[derive(Debug, Default, Deserialize)]
pub struct GraphParams {
    /// `final` returns only the final graph, byte for byte as the CLI writes it.
    pub view: Option<String>,
}

async fn graph(State(state): State<Arc<AppState>>, Path(id): Path<String>, Query(params): Query<GraphParams>) -> Result<Response, ApiError> {
    let shared = state.session(&id).await?;
    let guard = shared.lock().await;
    let s = guard.as_ref().ok_or_else(|| ApiError::internal("session slot empty"))?;
    if params.view.as_deref() == Some("final") {
        if s.graph.stage != Stage::Finalized {
            return Err(ApiError::new(StatusCode::CONFLICT, "not_finalized", "identification is not finished"));
        }
        return Ok(([(axum::http::header::CONTENT_TYPE, "application/json")], final_graph_json(&s.graph)).into_response());
    }
    let final_graph = (s.graph.stage == Stage::Finalized).then(|| FinalGraph::new(&s.graph));
    Ok(Json(GraphSnapshot { schema_version: SCHEMA_VERSION, phase: s.phase, graph: &s.graph, final_graph }).into_response())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/:id", get(status))
        .route("/sessions/:id/advance", post(advance))
        .route("/sessions/:id/queries", get(queries))
        .route("/sessions/:id/decisions", post(decide))
        .route("/sessions/:id/mesh", get(mesh))
        .route("/sessions/:id/graph", get(graph))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(state)
}

pub async fn serve(port: u16, store: SessionStore, defaults: SessionConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    log::info!("listening on {}, sessions in {}", listener.local_addr()?, store.root().display());
    axum::serve(listener, router(AppState::new(store, defaults))).await
}
