//! HTTP API: `POST /api/chat`, `GET /api/health`, static files under `/`.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{any, get, post};
use axum::{Json, Router};
use chatrank_core::service::{Engine, RespondTrace, SessionStore};
use chatrank_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

/// Longest accepted session id, in bytes.
pub const MAX_SESSION_ID: usize = 128;
/// Longest accepted message, in bytes.
pub const MAX_MESSAGE: usize = 4096;

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub sessions: Arc<SessionStore>,
}

impl AppState {
    pub fn new(engine: Engine) -> Self {
        AppState {
            engine: Arc::new(engine),
            sessions: Arc::new(SessionStore::new()),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct ChatRequest {
    pub session_id: String,
    pub message: String,
    #[serde(default)]
    pub debug: bool,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct ChatResponse {
    pub response: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<RespondTrace>,
}

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

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        let status = match r {
            JsonRejection::MissingJsonContentType(_) => StatusCode::UNSUPPORTED_MEDIA_TYPE,
            JsonRejection::JsonDataError(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, r.body_text())
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::EmptyUtterance | CoreError::EmptyQuery => ApiError::bad_request("message has no tokens"),
            other => {
                log::error!("respond failed: {other}");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal error")
            }
        }
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn chat(
    State(state): State<AppState>,
    body: Result<Json<ChatRequest>, JsonRejection>,
) -> Result<Json<ChatResponse>, ApiError> {
    let Json(req) = body?;
    if req.session_id.trim().is_empty() || req.session_id.len() > MAX_SESSION_ID {
        return Err(ApiError::bad_request(format!(
            "session_id must be 1 to {MAX_SESSION_ID} bytes"
        )));
    }
    if req.message.trim().is_empty() {
        return Err(ApiError::bad_request("message is empty"));
    }
    if req.message.len() > MAX_MESSAGE {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("message exceeds {MAX_MESSAGE} bytes"),
        ));
    }
    let debug = req.debug;
    // Scoring is CPU-bound; keep it off the async workers.
    let (response, trace) = tokio::task::spawn_blocking(move || {
        let now = Instant::now();
        let session = state.sessions.get_or_create(&req.session_id, now);
        let mut session = session.lock().expect("session poisoned");
        state.engine.respond(&mut session, &req.message, now)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(ChatResponse {
        response,
        trace: debug.then_some(trace),
    }))
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no such endpoint")
}

/// Routes for the API, plus static files from `static_dir` when given.
pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/chat", post(chat))
        .route("/api/{*rest}", any(api_not_found))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Evicts idle sessions every `ttl / 4` until the process exits.
pub fn spawn_session_gc(sessions: Arc<SessionStore>, ttl: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval((ttl / 4).max(Duration::from_secs(1)));
        loop {
            tick.tick().await;
            match sessions.gc(Instant::now(), ttl) {
                Ok(0) => {}
                Ok(n) => log::info!("evicted {n} idle sessions"),
                Err(e) => log::warn!("session gc: {e}"),
            }
        }
    })
}
