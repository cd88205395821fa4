use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use super::{commands::resolve_provider, ServeArgs};
use crate::error::{Error, Result};
use crate::index::{self, SearchMode, StoredIndex};
use crate::providers::{EmbedInput, EmbeddingProvider};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRequest {
    pub query: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub mode: Option<String>,
}

fn default_k() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub results: Vec<SearchHit>,
}

/// Shared server state. The index slot stays empty until loading finishes.
pub struct AppState {
    index: OnceLock<StoredIndex>,
    provider: Box<dyn EmbeddingProvider>,
    max_tokens: usize,
    workers: Semaphore,
}

impl AppState {
    pub fn new(provider: Box<dyn EmbeddingProvider>, max_tokens: usize, workers: usize) -> Self {
        Self {
            index: OnceLock::new(),
            provider,
            max_tokens,
            workers: Semaphore::new(workers.max(1)),
        }
    }

    /// Installs the index; later calls are ignored.
    pub fn set_index(&self, index: StoredIndex) {
        let _ = self.index.set(index);
    }

    pub fn is_ready(&self) -> bool {
        self.index.get().is_some()
    }

    fn search(&self, req: &SearchRequest) -> Result<SearchResponse> {
        let index = self
            .index
            .get()
            .ok_or_else(|| Error::Internal("index not loaded".into()))?;
        if req.query.is_empty() {
            return Err(Error::EmptyText);
        }
        let input = EmbedInput::text(&req.query);
        let hits = match index {
            StoredIndex::Dense(ix) => {
                let mode = match req.mode.as_deref() {
                    None | Some("exact") => SearchMode::Exact,
                    Some("ann") => SearchMode::Ann,
                    Some(m) => return Err(Error::InvalidConfig(format!("unknown mode `{m}` (exact, ann)"))),
                };
                ix.search(&self.provider.embed_dense(&input)?, req.k, mode)?
            }
            StoredIndex::MultiVector(ix) => {
                if let Some(m) = req.mode.as_deref().filter(|m| *m != "exact") {
                    return Err(Error::InvalidConfig(format!("mode `{m}` needs a dense index")));
                }
                if req.k == 0 {
                    return Err(Error::InvalidConfig("k must be >= 1".into()));
                }
                ix.search(&self.provider.embed_multivector(&input, self.max_tokens)?, req.k, false)?
            }
        };
        Ok(SearchResponse {
            results: hits
                .into_iter()
                .enumerate()
                .map(|(i, h)| SearchHit {
                    id: h.doc.to_string(),
                    score: h.score,
                    rank: i + 1,
                })
                .collect(),
        })
    }
}

fn error_response(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, msg.into()).into_response()
}

async fn healthz() -> &'static str {
    "ok"
}

async fn search(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    if !state.is_ready() {
        return error_response(StatusCode::SERVICE_UNAVAILABLE, "index loading");
    }
    let req: SearchRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, format!("malformed body: {e}")),
    };
    let Ok(_permit) = state.workers.acquire().await else {
        return error_response(StatusCode::SERVICE_UNAVAILABLE, "shutting down");
    };
    let st = state.clone();
    match tokio::task::spawn_blocking(move || st.search(&req)).await {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e @ (Error::Internal(_) | Error::RemoteUnavailable(_)))) => {
            error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
        }
        Ok(Err(e)) => error_response(StatusCode::BAD_REQUEST, e.to_string()),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/search", post(search))
        .with_state(state)
}

pub(super) fn serve(seed: u64, threads: Option<usize>, a: ServeArgs) -> Result<()> {
    let meta_path = a.index.join("meta.json");
    let raw = std::fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: index::IndexMeta = serde_json::from_slice(&raw)
        .map_err(|e| Error::parse(meta_path.display().to_string(), e.line(), e.to_string()))?;
    let provider = resolve_provider(&a.provider, seed, Some(&meta))?;
    let workers = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let state = Arc::new(AppState::new(provider, meta.max_tokens.unwrap_or(32), workers));

    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(workers)
        .enable_all()
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    rt.block_on(async move {
        let addr = format!("{}:{}", a.host, a.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Error::io(PathBuf::from(&addr), e))?;
        let local = listener.local_addr().map_err(|e| Error::io(PathBuf::from(&addr), e))?;
        println!("listening on {local}");

        let loader = state.clone();
        let dir = a.index.clone();
        let load = tokio::task::spawn_blocking(move || -> Result<()> {
            let (_, ix) = index::load_index(&dir)?;
            tracing::info!(docs = ix.len(), "index loaded");
            loader.set_index(ix);
            Ok(())
        });
        let server = tokio::spawn(async move { axum::serve(listener, router(state)).await });
        match load.await {
            Ok(Ok(())) => {}
            Ok(Err(e)) => return Err(e),
            Err(e) => return Err(Error::Internal(e.to_string())),
        }
        match server.await {
            Ok(r) => r.map_err(|e| Error::Internal(e.to_string())),
            Err(e) => Err(Error::Internal(e.to_string())),
        }
    })
}
