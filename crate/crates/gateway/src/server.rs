//! HTTP service hosting the registry and the scheduler.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::sync::Arc;

use agentmesh::executors::{DefaultExecutor, LlmExecutor, LlmSettings, Params};
use agentmesh::flowlog::FlowLog;
use agentmesh::network::{AgentNetwork, NetworkError, NetworkOwner, Route, Vertex, VertexId};
use agentmesh::registry::{
    DiscoveryQuery, Registration, Registry, RegistryConfig, RegistryError, SystemClock,
};
use agentmesh::scheduler::{Scheduler, SchedulerError, TaskRequest};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use parking_lot::Mutex;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;

use crate::config::GatewayConfig;
use crate::error::GatewayError;

/// A JSON error body: `{"error": code, "message": text}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl ToString) -> Self {
        Self {
            status,
            code: code.to_string(),
            message: message.to_string(),
        }
    }

    fn bad_request(message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": self.code, "message": self.message});
        (self.status, Json(body)).into_response()
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        let status = match e {
            RegistryError::DuplicateService(_) => StatusCode::CONFLICT,
            RegistryError::UnknownService(_) => StatusCode::NOT_FOUND,
            RegistryError::InvalidDescriptor(_)
            | RegistryError::EmptyQuery
            | RegistryError::InvalidQuery(_) => StatusCode::BAD_REQUEST,
            RegistryError::Io(_) | RegistryError::Journal { .. } => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        Self::new(status, e.code(), e)
    }
}

impl From<SchedulerError> for ApiError {
    fn from(e: SchedulerError) -> Self {
        let status = match e {
            SchedulerError::UnknownVertex(_) | SchedulerError::UnknownTask(_) => {
                StatusCode::NOT_FOUND
            }
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.code(), e)
    }
}

impl From<NetworkError> for ApiError {
    fn from(e: NetworkError) -> Self {
        let status = match e {
            NetworkError::DuplicateId(_) => StatusCode::CONFLICT,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.code(), e)
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Append-only JSONL file of routes added over the API.
#[derive(Debug)]
struct RouteJournal {
    file: Mutex<std::fs::File>,
}

impl RouteJournal {
    fn open(path: &std::path::Path) -> std::io::Result<(Self, Vec<Route>)> {
        let mut routes = Vec::new();
        if path.exists() {
            for (i, line) in BufReader::new(std::fs::File::open(path)?)
                .lines()
                .enumerate()
            {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str(&line) {
                    Ok(r) => routes.push(r),
                    Err(e) => tracing::warn!(line = i + 1, error = %e, "skipping bad route line"),
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok((
            Self {
                file: Mutex::new(file),
            },
            routes,
        ))
    }

    fn append(&self, r: &Route) -> std::io::Result<()> {
        let mut f = self.file.lock();
        writeln!(f, "{}", serde_json::to_string(r).expect("route serializes"))?;
        f.flush()
    }
}

#[derive(Clone)]
pub struct AppState {
    pub network: Arc<NetworkOwner>,
    pub registry: Arc<Registry>,
    pub scheduler: Scheduler,
    routes: Option<Arc<RouteJournal>>,
}

impl AppState {
    /// Opens the journals, rebuilds the network from registered services
    /// and persisted routes, and wires the scheduler.
    pub fn open(config: &GatewayConfig) -> Result<Self, GatewayError> {
        let registry = Arc::new(Registry::open(
            &config.registry_journal_path,
            RegistryConfig {
                liveness: config.settings.liveness(),
                ..RegistryConfig::default()
            },
            Arc::new(SystemClock),
        )?);
        let vertexes = registry.list().into_iter().map(|d| d.vertex).collect();
        let mut net = rebuild_network(vertexes);
        let routes = match &config.routes_path {
            Some(p) => {
                let (journal, persisted) = RouteJournal::open(p)?;
                for r in persisted {
                    match net.add_route(r.clone()) {
                        Ok(n) => net = n,
                        Err(e) => tracing::warn!(?r, error = %e, "dropping persisted route"),
                    }
                }
                Some(Arc::new(journal))
            }
            None => None,
        };
        let network = Arc::new(NetworkOwner::new(net));
        let mut executor = DefaultExecutor::new();
        if let Some(llm) = LlmSettings::from_env() {
            executor = executor.with_llm(Arc::new(LlmExecutor::over_http(llm)));
        }
        let flow_log = Arc::new(FlowLog::open(&config.flow_log_path)?);
        let scheduler = Scheduler::builder(network.clone(), Arc::new(executor))
            .registry(registry.clone())
            .flow_log(flow_log)
            .limits(config.settings.limits)
            .resolve_via_registry(true)
            .build();
        Ok(Self {
            network,
            registry,
            scheduler,
            routes,
        })
    }
}

/// Adds vertexes so that every group comes after its members. Vertexes
/// whose members never appear are dropped with a warning.
fn rebuild_network(mut pending: Vec<Vertex>) -> AgentNetwork {
    let mut net = AgentNetwork::new();
    loop {
        let before = pending.len();
        let mut rest = Vec::new();
        for v in pending {
            let ready = v
                .as_group()
                .is_none_or(|g| g.members.iter().all(|m| net.contains(m)));
            if !ready {
                rest.push(v);
                continue;
            }
            match net.add_vertex(v.clone()) {
                Ok(n) => net = n,
                Err(e) => tracing::warn!(vertex = %v.id, error = %e, "dropping registered vertex"),
            }
        }
        pending = rest;
        if pending.is_empty() || pending.len() == before {
            break;
        }
    }
    for v in pending {
        tracing::warn!(vertex = %v.id, "group members missing; not added to the network");
    }
    net
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/services", post(register).get(discover))
        .route("/v1/services/{id}", delete(deregister).get(get_service))
        .route("/v1/services/{id}/heartbeat", post(heartbeat))
        .route("/v1/tasks", post(submit))
        .route("/v1/tasks/{id}", get(task_status))
        .route("/v1/tasks/{id}/graph", get(task_graph))
        .route("/v1/routes", post(add_route).get(list_routes))
        .with_state(state)
}

async fn health(State(s): State<AppState>) -> Json<Value> {
    Json(json!({"status": "ok", "network_version": s.network.version()}))
}

/// Accepts a full registration or a bare vertex descriptor.
pub fn parse_registration(body: Value) -> Result<Registration, serde_json::Error> {
    if body.get("vertex").is_some() {
        serde_json::from_value(body)
    } else {
        serde_json::from_value::<Vertex>(body).map(Registration::new)
    }
}

async fn register(State(s): State<AppState>, Json(body): Json<Value>) -> ApiResult<Response> {
    let reg = parse_registration(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "InvalidDescriptor", e))?;
    let vertex = reg.vertex.clone();
    // Check network placement first so a rejected vertex is never registered.
    let staged = {
        let snap = s.network.snapshot();
        match snap.get(&vertex.id) {
            Some(existing) if **existing == vertex => None,
            Some(_) => Some(snap.remove_vertex(&vertex.id)?.add_vertex(vertex.clone())?),
            None => Some(snap.add_vertex(vertex.clone())?),
        }
    };
    let id = s.registry.register(reg)?;
    if staged.is_some() {
        s.network.mutate(|n| match n.get(&vertex.id) {
            Some(existing) if **existing == vertex => Ok(n.clone()),
            Some(_) => n.remove_vertex(&vertex.id)?.add_vertex(vertex.clone()),
            None => n.add_vertex(vertex.clone()),
        })?;
    }
    Ok((StatusCode::CREATED, Json(json!({"service_id": id}))).into_response())
}

async fn deregister(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    let vertex = s.registry.get(&id).map(|d| d.vertex.id);
    s.registry.deregister(&id)?;
    if let Some(v) = vertex {
        if let Err(e) = s.network.remove_vertex(&v) {
            tracing::warn!(vertex = %v, error = %e, "deregistered service stays in the network");
        }
    }
    Ok(StatusCode::NO_CONTENT)
}

async fn get_service(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let d = s
        .registry
        .get(&id)
        .ok_or_else(|| ApiError::from(RegistryError::UnknownService(id)))?;
    Ok(Json(
        serde_json::to_value(d).expect("descriptor serializes"),
    ))
}

async fn heartbeat(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let l = s.registry.heartbeat(&id)?;
    Ok(Json(json!({"liveness": l})))
}

#[derive(Debug, Deserialize)]
struct DiscoverParams {
    name: Option<String>,
    keywords: Option<String>,
    top_k: Option<usize>,
}

async fn discover(
    State(s): State<AppState>,
    Query(p): Query<DiscoverParams>,
) -> ApiResult<Json<Value>> {
    let keywords: Vec<String> = p
        .keywords
        .iter()
        .flat_map(|k| k.split(','))
        .map(str::trim)
        .filter(|k| !k.is_empty())
        .map(String::from)
        .collect();
    let q = DiscoveryQuery {
        name_substring: p.name,
        description_keywords: (!keywords.is_empty()).then_some(keywords),
        top_k: p.top_k.unwrap_or(10),
        ..DiscoveryQuery::default()
    };
    let results: Vec<Value> = s
        .registry
        .discover(&q)?
        .into_iter()
        .map(|r| json!({"service_id": r.service_id, "score": r.score}))
        .collect();
    Ok(Json(json!({ "results": results })))
}

#[derive(Debug, Deserialize)]
struct SubmitBody {
    target: VertexId,
    #[serde(default)]
    payload: Params,
    #[serde(default)]
    deadline_s: Option<f64>,
}

async fn submit(State(s): State<AppState>, Json(b): Json<SubmitBody>) -> ApiResult<Response> {
    let req = TaskRequest {
        target: b.target,
        payload: b.payload,
        deadline_s: b.deadline_s,
    };
    let id = s.scheduler.submit(req)?;
    Ok((StatusCode::ACCEPTED, Json(json!({"task_id": id}))).into_response())
}

async fn task_status(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let t = s.scheduler.get_status(&id)?;
    Ok(Json(serde_json::to_value(t).expect("task serializes")))
}

#[derive(Debug, Deserialize)]
struct GraphParams {
    format: Option<String>,
}

async fn task_graph(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(p): Query<GraphParams>,
) -> ApiResult<Response> {
    let g = s.scheduler.get_graph(&id)?;
    match p.format.as_deref() {
        None | Some("json") => Ok(Json(g).into_response()),
        Some("dot") => {
            Ok(([(header::CONTENT_TYPE, "text/vnd.graphviz")], g.to_dot()).into_response())
        }
        Some(other) => Err(ApiError::bad_request(format!(
            "unknown graph format {other:?}"
        ))),
    }
}

async fn add_route(State(s): State<AppState>, Json(r): Json<Route>) -> ApiResult<Response> {
    let net = s.network.add_route(r.clone())?;
    if let Some(j) = &s.routes {
        j.append(&r)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "IoError", e))?;
    }
    let body = json!({"route": r, "network_version": net.version()});
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn list_routes(State(s): State<AppState>) -> Json<Value> {
    let net = s.network.snapshot();
    let mut by_kind: BTreeMap<String, usize> = BTreeMap::new();
    for r in net.routes() {
        *by_kind
            .entry(format!("{:?}", r.kind).to_uppercase())
            .or_default() += 1;
    }
    Json(json!({"routes": net.routes(), "counts": by_kind}))
}

/// A bound but not yet serving gateway.
pub struct Gateway {
    state: AppState,
    listener: TcpListener,
}

impl Gateway {
    pub async fn bind(config: &GatewayConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let state = AppState::open(config)?;
        let listener =
            TcpListener::bind(&config.listen_addr)
                .await
                .map_err(|e| GatewayError::Bind {
                    addr: config.listen_addr.clone(),
                    reason: e.to_string(),
                })?;
        Ok(Self { state, listener })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener
            .local_addr()
            .expect("bound listener has an address")
    }

    pub fn state(&self) -> &AppState {
        &self.state
    }

    pub async fn serve(self) -> Result<(), GatewayError> {
        axum::serve(self.listener, router(self.state)).await?;
        Ok(())
    }

    /// Serves until `shutdown` resolves.
    pub async fn serve_until(
        self,
        shutdown: impl std::future::Future<Output = ()> + Send + 'static,
    ) -> Result<(), GatewayError> {
        axum::serve(self.listener, router(self.state))
            .with_graceful_shutdown(shutdown)
            .await?;
        Ok(())
    }
}
