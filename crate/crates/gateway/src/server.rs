//! HTTP/JSON session service.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use autograms::authoring::{export_graph_document, import_graph_document, GraphDocument};
use autograms::memory::MemoryObject;
use autograms::model::GraphModel;
use autograms::runtime::{RuntimeError, Session};
use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::OwnedMutexGuard;

use crate::load::BackendChoice;
use crate::store::{GraphRef, SessionRecord, SessionStore, StoreError};

pub struct ServerOptions {
    pub graph: GraphModel,
    /// Printable name of the graph source, stored in session records.
    pub source: String,
    pub backends: BackendChoice,
    pub store_dir: PathBuf,
    pub expose_variables: bool,
    pub seed: u64,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session `{id}`"))
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::internal(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub struct Entry {
    pub session: Session,
    pub record: SessionRecord,
}

impl Entry {
    /// Copies the session's state into its record.
    fn sync(&mut self) {
        self.record.memory = self.session.memory.to_json();
        self.record.backend_state = self.session.backends.state();
        if self.session.graph.config.self_referential {
            self.record.live_graph = Some(export_graph_document(&self.session.graph, None));
        }
        self.record.updated_at = Utc::now();
    }
}

type Slot = Arc<tokio::sync::Mutex<Entry>>;

pub struct AppState {
    opts: ServerOptions,
    store: SessionStore,
    live: Mutex<HashMap<String, Slot>>,
}

impl AppState {
    pub fn new(opts: ServerOptions) -> Result<Arc<Self>, StoreError> {
        let store = SessionStore::open(&opts.store_dir)?;
        Ok(Arc::new(AppState { opts, store, live: Mutex::new(HashMap::new()) }))
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    fn base_graph(&self, record: &SessionRecord) -> Result<GraphModel, ApiError> {
        if let Some(doc) = &record.live_graph {
            return import_graph_document(doc, self.opts.graph.config.clone()).map_err(ApiError::internal);
        }
        match &record.graph {
            GraphRef::Server { .. } => Ok(self.opts.graph.clone()),
            GraphRef::Inline { document } => {
                import_graph_document(document, self.opts.graph.config.clone()).map_err(ApiError::internal)
            }
        }
    }

    fn build(&self, record: SessionRecord) -> Result<Entry, ApiError> {
        let graph = self.base_graph(&record)?;
        let mut backends = self.opts.backends.build(&graph.config).map_err(ApiError::internal)?;
        if !record.backend_state.is_null() {
            backends.restore_state(&record.backend_state).map_err(ApiError::internal)?;
        }
        let memory = MemoryObject::from_json(&record.memory).map_err(ApiError::internal)?;
        let session = Session::new(graph, backends).map_err(ApiError::internal)?.with_seed(record.seed).with_memory(memory);
        Ok(Entry { session, record })
    }

    /// Live session, loading it from the store after a restart.
    fn slot(&self, id: &str) -> Result<Slot, ApiError> {
        if let Some(s) = self.live.lock().expect("session map").get(id) {
            return Ok(s.clone());
        }
        let record = self.store.load(id)?.ok_or_else(|| ApiError::not_found(id))?;
        let entry = self.build(record)?;
        let mut live = self.live.lock().expect("session map");
        Ok(live.entry(id.to_string()).or_insert_with(|| Arc::new(tokio::sync::Mutex::new(entry))).clone())
    }

    /// Exclusive access to a session; a second caller gets 409 instead of
    /// waiting.
    pub fn lock(&self, id: &str) -> Result<OwnedMutexGuard<Entry>, ApiError> {
        self.slot(id)?
            .try_lock_owned()
            .map_err(|_| ApiError::new(StatusCode::CONFLICT, format!("session `{id}` is busy with another request")))
    }

    fn create(&self, document: Option<GraphDocument>) -> Result<String, ApiError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let graph = match &document {
            None => GraphRef::Server { source: self.opts.source.clone() },
            Some(doc) => {
                import_graph_document(doc, self.opts.graph.config.clone())
                    .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
                GraphRef::Inline { document: doc.clone() }
            }
        };
        let now = Utc::now();
        let record = SessionRecord {
            session_id: id.clone(),
            graph,
            live_graph: None,
            memory: MemoryObject::new(self.opts.graph.config.initial_prompt.clone()).to_json(),
            backend_mode: self.opts.backends.mode().to_string(),
            backend_state: serde_json::Value::Null,
            seed: self.opts.seed,
            turn_count: 0,
            created_at: now,
            updated_at: now,
        };
        let mut entry = self.build(record)?;
        entry.sync();
        self.store.save(&entry.record)?;
        self.live.lock().expect("session map").insert(id.clone(), Arc::new(tokio::sync::Mutex::new(entry)));
        Ok(id)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateBody {
    #[serde(default)]
    graph: Option<GraphDocument>,
}

#[derive(Serialize)]
struct Created {
    session_id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReplyBody {
    user_reply: String,
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct ReplyResponse {
    pub reply: String,
    pub node: String,
    pub turn_index: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateBody {}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct SimulateResponse {
    pub user_reply: String,
    pub sampled_index: usize,
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct StateResponse {
    pub current_node: Option<String>,
    pub visit_log: Vec<String>,
    pub visible_turn_count: usize,
    pub variable_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variables: Option<serde_json::Map<String, serde_json::Value>>,
}

#[derive(Deserialize)]
struct GraphQuery {
    session: Option<String>,
    category: Option<String>,
}

fn status_for(e: &RuntimeError) -> StatusCode {
    match e {
        RuntimeError::NotAwaitingUser | RuntimeError::MissingUserPrompts(_) => StatusCode::CONFLICT,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

/// The body is optional here, so it is parsed by hand rather than through
/// the `Json` extractor.
async fn create_session(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<Created> {
    let doc = if body.iter().all(u8::is_ascii_whitespace) {
        None
    } else {
        let b: CreateBody =
            serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        b.graph
    };
    let session_id = blocking(move || st.create(doc)).await?;
    Ok(Json(Created { session_id }))
}

async fn reply(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<ReplyBody>, JsonRejection>,
) -> ApiResult<ReplyResponse> {
    let Json(body) = body?;
    let mut guard = st.lock(&id)?;
    let out = blocking(move || {
        let entry = &mut *guard;
        let result = entry.session.reply(&body.user_reply);
        // on failure the runtime has already rolled memory back
        let resp = result.as_ref().ok().map(|out| {
            let turn_index = entry.record.turn_count;
            entry.record.turn_count += 1;
            ReplyResponse { reply: out.text.clone(), node: out.node.clone(), turn_index }
        });
        entry.sync();
        st.store.save(&entry.record)?;
        match (resp, result) {
            (Some(r), _) => Ok(r),
            (None, Err(e)) => Err(ApiError::new(status_for(&e), e.to_string())),
            (None, Ok(_)) => unreachable!(),
        }
    })
    .await?;
    Ok(Json(out))
}

async fn simulate_user(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<SimulateBody>, JsonRejection>,
) -> ApiResult<SimulateResponse> {
    let Json(SimulateBody {}) = body?;
    let mut guard = st.lock(&id)?;
    let out = blocking(move || {
        let entry = &mut *guard;
        let result = entry.session.simulate_user();
        entry.sync();
        st.store.save(&entry.record)?;
        let (user_reply, sampled_index) = result.map_err(|e| ApiError::new(status_for(&e), e.to_string()))?;
        Ok(SimulateResponse { user_reply, sampled_index })
    })
    .await?;
    Ok(Json(out))
}

async fn session_state(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<StateResponse> {
    let guard = st.lock(&id)?;
    let m = &guard.session.memory;
    let variable_names = m.visible_variable_names();
    let variables = st.opts.expose_variables.then(|| {
        variable_names
            .iter()
            .filter_map(|n| m.lookup(n).map(|v| (n.clone(), serde_json::Value::String(v.to_string()))))
            .collect()
    });
    Ok(Json(StateResponse {
        current_node: guard.session.current_node().map(str::to_string),
        visit_log: m.visit_log.clone(),
        visible_turn_count: m.visible_turns().len(),
        variable_names,
        variables,
    }))
}

async fn list_sessions(State(st): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let list = blocking(move || Ok(st.store.list()?)).await?;
    Ok(Json(list).into_response())
}

/// Pretty JSON exactly as the authoring export prints it.
async fn graph(State(st): State<Arc<AppState>>, Query(q): Query<GraphQuery>) -> Result<Response, ApiError> {
    let body = match &q.session {
        None => export_graph_document(&st.opts.graph, q.category.as_deref()).to_json_pretty(),
        Some(id) => {
            let guard = st.lock(id)?;
            export_graph_document(&guard.session.graph, q.category.as_deref()).to_json_pretty()
        }
    };
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/:id/reply", post(reply))
        .route("/sessions/:id/simulate_user", post(simulate_user))
        .route("/sessions/:id/state", get(session_state))
        .route("/graph", get(graph))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
