//! HTTP API over a persisted refinement state: the validation queue, the
//! concept graph and reviewer resolutions.
//!
//! Resolutions carry the graph version they were made against; a stale
//! version is refused with 409. Every accepted resolution is written to the
//! graph file before the response is sent.

use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::oracle::{build_prompt, ConceptContext, Decision, PromptConfig};
use crate::pipeline::write_atomic;
use crate::refine::{
    GraphDocument, ItemStatus, RefineError, RefinementState, ReplayOracle, Resolution, SimilarityOracle,
    ValidationItem,
};

type SharedOracle = Box<dyn SimilarityOracle + Send + Sync>;

struct Live {
    state: RefinementState,
    oracle: SharedOracle,
}

/// Shared service state. Reads take a shared lock; resolutions take the
/// exclusive lock, so the refinement state has a single writer.
pub struct App {
    live: RwLock<Live>,
    graph_path: Option<PathBuf>,
    metrics_path: Option<PathBuf>,
    token: Option<String>,
    prompt: PromptConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Refine(#[from] RefineError),
}

impl App {
    /// Stored decisions are replayed when a resolution needs the oracle;
    /// pairs never decided count as dissimilar unless a live oracle is set
    /// with [`App::with_oracle`].
    pub fn from_document(doc: &GraphDocument) -> Result<Self, RefineError> {
        let oracle = ReplayOracle::new(doc.decision_triples());
        let state = RefinementState::from_document(doc, &oracle)?;
        Ok(App {
            live: RwLock::new(Live {
                state,
                oracle: Box::new(oracle),
            }),
            graph_path: None,
            metrics_path: None,
            token: None,
            prompt: PromptConfig::default(),
        })
    }

    pub fn load(graph_path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(graph_path).map_err(|source| ServiceError::Io {
            path: graph_path.to_path_buf(),
            source,
        })?;
        let doc = GraphDocument::from_json(&text)?;
        Ok(Self::from_document(&doc)?.persist_to(graph_path))
    }

    /// Resolutions are written back to this file.
    pub fn persist_to(mut self, path: &Path) -> Self {
        self.graph_path = Some(path.to_path_buf());
        self
    }

    /// Run metrics (e.g. a pipeline's `metrics.json`) served alongside the
    /// live counters.
    pub fn with_metrics_file(mut self, path: &Path) -> Self {
        self.metrics_path = Some(path.to_path_buf());
        self
    }

    /// Requires `Authorization: Bearer <token>` on every API route.
    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    /// Oracle consulted for pairs that resolutions bring into comparison.
    /// Recorded decisions still take precedence.
    pub fn with_oracle(self, oracle: impl SimilarityOracle + Send + Sync + 'static) -> Self {
        self.live.write().expect("state lock").oracle = Box::new(oracle);
        self
    }

    pub fn with_prompt(mut self, prompt: PromptConfig) -> Self {
        self.prompt = prompt;
        self
    }

    pub fn document(&self) -> GraphDocument {
        self.live.read().expect("state lock").state.to_document()
    }
}

fn error(status: StatusCode, message: impl std::fmt::Display, version: u64) -> Response {
    (status, Json(json!({ "error": message.to_string(), "version": version }))).into_response()
}

#[derive(Debug, Deserialize)]
struct QueueParams {
    status: Option<String>,
}

async fn list_queue(State(app): State<Arc<App>>, Query(q): Query<QueueParams>) -> Response {
    let live = app.live.read().expect("state lock");
    let queue = live.state.queue();
    let items: Vec<&ValidationItem> = match q.status.as_deref().unwrap_or("pending") {
        "pending" => queue.pending(),
        "approved" => queue.items().iter().filter(|i| i.status == ItemStatus::Approved).collect(),
        "rejected" => queue.items().iter().filter(|i| i.status == ItemStatus::Rejected).collect(),
        "all" => queue.items().iter().collect(),
        other => {
            return error(
                StatusCode::BAD_REQUEST,
                format!("unknown status filter `{other}`"),
                live.state.version(),
            )
        }
    };
    Json(items).into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ResolveRequest {
    pub decision: Resolution,
    pub version: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ResolveResponse {
    pub item: ValidationItem,
    pub merged: bool,
    pub requeued: Option<u64>,
    pub version: u64,
}

async fn resolve(State(app): State<Arc<App>>, UrlPath(id): UrlPath<u64>, Json(req): Json<ResolveRequest>) -> Response {
    let mut guard = app.live.write().expect("state lock");
    let live = &mut *guard;
    let version = live.state.version();
    match live.state.queue().get(id) {
        None => return error(StatusCode::NOT_FOUND, RefineError::UnknownItem(id), version),
        Some(item) if item.status != ItemStatus::Pending => {
            return error(StatusCode::CONFLICT, RefineError::NotPending(id), version)
        }
        Some(_) => {}
    }
    if req.version != version {
        return error(
            StatusCode::CONFLICT,
            format!("stale version {} (current {version})", req.version),
            version,
        );
    }
    let before = live.state.clone();
    let report = match live.state.resolve(id, req.decision, live.oracle.as_ref()) {
        Ok(r) => r,
        Err(e) => {
            live.state = before;
            return error(StatusCode::CONFLICT, e, version);
        }
    };
    if let Some(path) = &app.graph_path {
        if let Err(e) = write_atomic(path, &live.state.to_document().to_json()) {
            live.state = before;
            log::error!("persisting {} failed: {e}", path.display());
            return error(StatusCode::INTERNAL_SERVER_ERROR, format!("could not persist the graph: {e}"), version);
        }
    }
    Json(ResolveResponse {
        item: report.item,
        merged: report.merged,
        requeued: report.requeued,
        version: report.version,
    })
    .into_response()
}

async fn graph(State(app): State<Arc<App>>) -> Response {
    Json(app.document()).into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PairContext {
    pub item: ValidationItem,
    pub first: ConceptContext,
    pub second: ConceptContext,
    /// The oracle prompt for the pair, when it fits the context budget.
    pub prompt: Option<String>,
    pub decision: Option<Decision>,
    pub version: u64,
}

async fn pair_context(State(app): State<Arc<App>>, UrlPath(id): UrlPath<u64>) -> Response {
    let live = app.live.read().expect("state lock");
    let version = live.state.version();
    let Some(item) = live.state.queue().get(id) else {
        return error(StatusCode::NOT_FOUND, RefineError::UnknownItem(id), version);
    };
    let g = live.state.graph();
    let (a, b) = &item.pair;
    let (Some(x), Some(y)) = (g.index_of(a), g.index_of(b)) else {
        return error(StatusCode::NOT_FOUND, RefineError::UnknownConcept(format!("{a} / {b}")), version);
    };
    let first = ConceptContext::from_graph(g, x);
    let second = ConceptContext::from_graph(g, y);
    let prompt = build_prompt(&first, &second, &app.prompt).ok().map(|q| q.render());
    let decision = live.state.decision(a, b).cloned().or_else(|| item.context.decision.clone());
    Json(PairContext {
        item: item.clone(),
        first,
        second,
        prompt,
        decision,
        version,
    })
    .into_response()
}

async fn metrics(State(app): State<Arc<App>>) -> Response {
    let live = app.live.read().expect("state lock");
    let s = &live.state;
    let items = s.queue().items();
    let count = |st: ItemStatus| items.iter().filter(|i| i.status == st).count();
    let run: Option<Value> = app
        .metrics_path
        .as_ref()
        .and_then(|p| std::fs::read_to_string(p).ok())
        .and_then(|t| serde_json::from_str(&t).ok());
    Json(json!({
        "version": s.version(),
        "concepts": s.graph().len(),
        "classes": s.class_count(),
        "pending": count(ItemStatus::Pending),
        "approved": count(ItemStatus::Approved),
        "rejected": count(ItemStatus::Rejected),
        "decisions": s.decisions().len(),
        "run": run,
    }))
    .into_response()
}

async fn require_token(State(app): State<Arc<App>>, req: Request, next: Next) -> Response {
    if let Some(token) = &app.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            let version = app.live.read().expect("state lock").state.version();
            return error(StatusCode::UNAUTHORIZED, "missing or wrong bearer token", version);
        }
    }
    next.run(req).await
}

pub fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/api/v1/queue", get(list_queue))
        .route("/api/v1/queue/{id}/resolve", post(resolve))
        .route("/api/v1/graph", get(graph))
        .route("/api/v1/pairs/{id}/context", get(pair_context))
        .route("/api/v1/metrics", get(metrics))
        .layer(middleware::from_fn_with_state(app.clone(), require_token))
        .with_state(app)
}

/// Serves until the process is stopped.
pub async fn serve(app: Arc<App>, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(app)).await
}
