//! HTTP API: `/api/ask`, `/api/feedback`, `/api/metrics`, `/api/health`,
//! plus static figures under `/assets/figures/` and the web UI at `/`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use asksci_core::domain::VoteRecord;
use asksci_core::metrics::Window;
use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::{header, HeaderName, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;
use tower_http::set_header::SetResponseHeaderLayer;

use crate::config::ServiceConfig;
use crate::embedder::{EmbedError, Embedder};
use crate::engine::{ClientInfo, Corpus, QueryEngine, QueryError};
use crate::feedback::{render_report_text, report_from_logs, FeedbackError, FeedbackStore};
use crate::logs::{now_millis, to_timestamp};

pub const API_VERSION: &str = "1";

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<QueryEngine>,
    pub feedback: Arc<FeedbackStore>,
    limiter: Arc<RateLimiter>,
    question_log: PathBuf,
    vote_log: PathBuf,
}

impl AppState {
    /// Loads indexes and opens logs as described by `config`.
    pub fn from_config(config: &ServiceConfig) -> anyhow::Result<Self> {
        config.validate()?;
        let corpus = Corpus::load(&config.data_paths())?;
        let embedder = Embedder::from_config(&config.embedder.clone().with_env_overrides()?)?;
        let engine = QueryEngine::new(corpus, embedder, config.query.clone())?
            .with_figure_base(config.figure_base.clone())
            .with_question_log(&config.question_log)?;
        let engine = Arc::new(engine);
        let feedback = Arc::new(FeedbackStore::open(engine.clone(), &config.vote_log)?);
        Ok(Self {
            engine,
            feedback,
            limiter: Arc::new(RateLimiter::new(config.rate_limit_per_minute)),
            question_log: config.question_log.clone(),
            vote_log: config.vote_log.clone(),
        })
    }
}

/// Builds the full router for `state`.
pub fn router(state: AppState, config: &ServiceConfig) -> anyhow::Result<Router> {
    let api = Router::new()
        .route("/api/ask", post(ask))
        .route("/api/feedback", post(feedback))
        .route("/api/metrics", get(metrics))
        .route("/api/health", get(health))
        .with_state(state)
        .layer(SetResponseHeaderLayer::overriding(
            HeaderName::from_static("x-api-version"),
            HeaderValue::from_static(API_VERSION),
        ));

    let mut app = api;
    if let Some(dir) = &config.figures_dir {
        app = app.nest_service("/assets/figures", ServeDir::new(dir));
    }
    if let Some(dir) = &config.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    if !config.cors_allowlist.is_empty() {
        let origins = config
            .cors_allowlist
            .iter()
            .map(|o| HeaderValue::from_str(o))
            .collect::<Result<Vec<_>, _>>()?;
        app = app.layer(
            CorsLayer::new()
                .allow_origin(AllowOrigin::list(origins))
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([header::CONTENT_TYPE]),
        );
    }
    Ok(app)
}

/// Runs the service until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let state = tokio::task::spawn_blocking({
        let config = config.clone();
        move || AppState::from_config(&config)
    })
    .await??;
    tracing::info!(
        answers = state.engine.corpus().answer_index.len(),
        exams = state.engine.corpus().exam_index.len(),
        "indexes loaded"
    );
    let app = router(state, &config)?;
    let addr: SocketAddr = config.listen.parse()?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    retryable: bool,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            retryable: false,
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::warn!(code = self.code, message = %self.message, "request failed");
        }
        let body = json!({ "error": self.code, "message": self.message, "retryable": self.retryable });
        (self.status, Json(body)).into_response()
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::EmptyQuestion => Self::new(StatusCode::BAD_REQUEST, "EmptyQuestion", e.to_string()),
            QueryError::EmptyClient => Self::new(StatusCode::BAD_REQUEST, "BadJson", e.to_string()),
            QueryError::Embed(inner) => Self {
                retryable: matches!(inner, EmbedError::RemoteUnavailable(_)),
                ..Self::new(
                    StatusCode::SERVICE_UNAVAILABLE,
                    "EmbedFailure",
                    "service temporarily unavailable",
                )
            },
            other => Self::internal(other.to_string()),
        }
    }
}

impl From<FeedbackError> for ApiError {
    fn from(e: FeedbackError) -> Self {
        match e {
            FeedbackError::UnknownQuestion(_) => Self::new(StatusCode::NOT_FOUND, "UnknownQuestion", e.to_string()),
            FeedbackError::PositionOutOfRange { .. } => {
                Self::new(StatusCode::BAD_REQUEST, "PositionOutOfRange", e.to_string())
            }
            FeedbackError::Invalid(_) => Self::new(StatusCode::BAD_REQUEST, "BadJson", e.to_string()),
            FeedbackError::Log(_) => Self::internal(e.to_string()),
        }
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BadJson", e.to_string()))
}

#[derive(Debug, Deserialize, Serialize)]
pub struct AskRequest {
    pub question: String,
    #[serde(default)]
    pub subject: Option<String>,
    pub client_id: String,
    /// ISO country code captured by the client at session start.
    #[serde(default)]
    pub country: Option<String>,
}

async fn ask(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: AskRequest = parse_body(&body)?;
    if req.question.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "EmptyQuestion", "question is empty"));
    }
    if let Some(subject) = req.subject.as_deref().filter(|s| !s.is_empty()) {
        if subject != state.engine.corpus().subject {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "UnknownSubject",
                format!("subject `{subject}` is not served here"),
            ));
        }
    }
    state.limiter.check(&req.client_id)?;
    let engine = state.engine.clone();
    let client = ClientInfo {
        client_id: req.client_id,
        country: req.country.filter(|c| !c.is_empty()),
    };
    let result = tokio::task::spawn_blocking(move || engine.answer_question(&req.question, &client))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(result).into_response())
}

#[derive(Debug, Deserialize, Serialize)]
pub struct FeedbackRequest {
    pub question_id: String,
    pub position: i64,
    pub helpful: bool,
    pub client_id: String,
}

async fn feedback(State(state): State<AppState>, body: Bytes) -> Result<StatusCode, ApiError> {
    let req: FeedbackRequest = parse_body(&body)?;
    state.limiter.check(&req.client_id)?;
    let position = u8::try_from(req.position).map_err(|_| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "PositionOutOfRange",
            format!("position {} out of range", req.position),
        )
    })?;
    let vote = VoteRecord {
        question_id: req.question_id,
        position,
        helpful: req.helpful,
        timestamp: to_timestamp(now_millis()),
        client_id: req.client_id,
    };
    let store = state.feedback.clone();
    tokio::task::spawn_blocking(move || store.record_vote(&vote))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
pub struct MetricsParams {
    pub start: Option<String>,
    pub end: Option<String>,
    pub format: Option<String>,
}

fn parse_instant(name: &str, value: Option<&str>) -> Result<Option<DateTime<Utc>>, ApiError> {
    value
        .filter(|v| !v.is_empty())
        .map(|v| {
            DateTime::parse_from_rfc3339(v)
                .map(|t| t.with_timezone(&Utc))
                .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BadWindow", format!("{name}: {e}")))
        })
        .transpose()
}

async fn metrics(
    State(state): State<AppState>,
    params: Result<Query<MetricsParams>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(params) = params.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BadWindow", e.body_text()))?;
    let start = parse_instant("start", params.start.as_deref())?;
    let end = parse_instant("end", params.end.as_deref())?;
    let window = Window::new(start.map(to_timestamp), end.map(to_timestamp))
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BadWindow", e.to_string()))?;
    let (questions, votes) = (state.question_log.clone(), state.vote_log.clone());
    let report = tokio::task::spawn_blocking(move || report_from_logs(&questions, &votes, window))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| ApiError::internal(e.to_string()))?;
    match params.format.as_deref() {
        None | Some("json") => Ok(Json(report).into_response()),
        Some("text") => Ok(render_report_text(&report).into_response()),
        Some(other) => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "BadFormat",
            format!("unknown format `{other}`"),
        )),
    }
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    let corpus = state.engine.corpus();
    Json(json!({
        "status": "ok",
        "subject": corpus.subject,
        "answer_count": corpus.answer_index.len(),
        "exam_count": corpus.exam_index.len(),
        "model_id": corpus.answer_index.model_id(),
        "dim": corpus.answer_index.dim(),
    }))
}

/// Fixed-window per-client request cap.
struct RateLimiter {
    per_minute: u32,
    windows: Mutex<HashMap<String, (u64, u32)>>,
}

impl RateLimiter {
    fn new(per_minute: u32) -> Self {
        Self {
            per_minute,
            windows: Mutex::new(HashMap::new()),
        }
    }

    fn check(&self, client_id: &str) -> Result<(), ApiError> {
        if self.per_minute == 0 {
            return Ok(());
        }
        let minute = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs() / 60)
            .unwrap_or_default();
        let mut windows = self.windows.lock().unwrap_or_else(|e| e.into_inner());
        if windows.len() > 100_000 {
            windows.retain(|_, (m, _)| *m == minute);
        }
        let slot = windows.entry(client_id.to_string()).or_insert((minute, 0));
        if slot.0 != minute {
            *slot = (minute, 0);
        }
        if slot.1 >= self.per_minute {
            return Err(ApiError::new(
                StatusCode::TOO_MANY_REQUESTS,
                "RateLimited",
                format!("more than {} requests per minute", self.per_minute),
            ));
        }
        slot.1 += 1;
        Ok(())
    }
}
