//! REST API over the engine. Every body is JSON carrying `schema_version`;
//! errors use `{code, message, detail}` with stable codes.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use copilot_core::corpus::StrategyLabel;
use copilot_core::pipeline::{PipelineError, Speaker};
use copilot_core::recommend::{Method, MockScorer, RecommendError, ScoreRequest};
use copilot_core::Engine;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::AppConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub config: Arc<AppConfig>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), detail: None }
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "schema_version": SCHEMA_VERSION,
            "code": self.code,
            "message": self.message,
            "detail": self.detail,
        });
        (self.status, Json(body)).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        use PipelineError as P;
        let (status, code) = match &e {
            P::SessionNotFound(_) => (StatusCode::NOT_FOUND, "session_not_found"),
            P::ModelNotLoaded => (StatusCode::SERVICE_UNAVAILABLE, "model_not_loaded"),
            P::NoRecommendationPending(_) => (StatusCode::CONFLICT, "no_recommendation_pending"),
            P::GeneratorUnavailable(_) => (StatusCode::BAD_GATEWAY, "generator_unavailable"),
            P::EmptyMessage => (StatusCode::BAD_REQUEST, "empty_message"),
            P::Recommend(RecommendError::ScorerUnavailable(_)) => (StatusCode::BAD_GATEWAY, "scorer_unavailable"),
            P::Recommend(_) => (StatusCode::INTERNAL_SERVER_ERROR, "recommend_failed"),
            P::Config(_) | P::Data(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            P::Persistence(_) => (StatusCode::INTERNAL_SERVER_ERROR, "persistence_failed"),
            P::InvalidLog(_) | P::Classify(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

fn bad_json(r: JsonRejection) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", "request body is not valid JSON for this endpoint")
        .with_detail(Value::String(r.body_text()))
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(bad_json)
}

fn parse_method(m: Option<&str>) -> Result<Option<Method>, ApiError> {
    m.map(|s| s.parse::<Method>().map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_method", e))).transpose()
}

/// Adds `schema_version` to an object payload.
fn reply(status: StatusCode, payload: impl serde::Serialize) -> Response {
    let mut v = serde_json::to_value(payload).expect("payload serializes");
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("schema_version".into(), json!(SCHEMA_VERSION));
        }
        None => v = json!({ "schema_version": SCHEMA_VERSION, "data": v }),
    }
    (status, Json(v)).into_response()
}

/// Engine calls may block on remote scorers or generators.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, PipelineError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/labels", get(labels))
        .route("/config", get(config))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/turns", post(add_turn))
        .route("/sessions/{id}/draft", post(draft))
        .route("/sessions/{id}/verify", post(verify))
        .route("/detect", post(detect))
        .route("/classify", post(classify))
        .route("/recommend", post(recommend))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state)
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this endpoint")
}

async fn health(State(s): State<AppState>) -> Response {
    match s.engine.models() {
        Ok(m) => reply(StatusCode::OK, json!({ "status": "ok", "models": m.hashes })),
        Err(_) => reply(StatusCode::SERVICE_UNAVAILABLE, json!({ "status": "loading" })),
    }
}

async fn labels(State(s): State<AppState>) -> Result<Response, ApiError> {
    let m = s.engine.models()?;
    Ok(reply(StatusCode::OK, json!({ "labels": m.classifier.codec.names() })))
}

async fn config(State(s): State<AppState>) -> Response {
    reply(StatusCode::OK, json!({ "config": s.config.redacted() }))
}

async fn create_session(State(s): State<AppState>) -> Result<Response, ApiError> {
    let engine = s.engine.clone();
    let id = blocking(move || engine.create_session()).await?;
    Ok(reply(StatusCode::CREATED, json!({ "session_id": id })))
}

async fn get_session(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = s.engine.session(&id)?;
    Ok(reply(StatusCode::OK, session))
}

#[derive(Deserialize)]
struct TurnBody {
    speaker: Speaker,
    text: String,
}

#[derive(Deserialize)]
struct MethodQuery {
    method: Option<String>,
}

async fn add_turn(
    State(s): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<MethodQuery>, QueryRejection>,
    payload: Result<Json<TurnBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_query", e.body_text()))?;
    let method = parse_method(q.method.as_deref())?;
    let b = body(payload)?;
    let engine = s.engine.clone();
    let sid = id.clone();
    let rec = blocking(move || engine.add_turn(&sid, b.speaker, &b.text, method)).await?;
    let session = s.engine.session(&id)?;
    Ok(reply(StatusCode::OK, json!({ "session_id": id, "turns": session.turns, "recommendation": rec })))
}

#[derive(Deserialize)]
struct DraftBody {
    #[serde(default)]
    strategy: Option<StrategyLabel>,
}

async fn draft(
    State(s): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<DraftBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    let b = body(payload)?;
    let strategy = match b.strategy {
        Some(l) => l,
        None => s
            .engine
            .session(&id)?
            .last_recommendation
            .map(|r| r.chosen)
            .ok_or_else(|| ApiError::from(PipelineError::NoRecommendationPending(id.clone())))?,
    };
    let engine = s.engine.clone();
    let response = blocking(move || engine.generate_draft(&id, strategy)).await?;
    Ok(reply(StatusCode::OK, json!({ "strategy": strategy, "response": response })))
}

#[derive(Deserialize)]
struct VerifyBody {
    tutor_response: String,
}

async fn verify(
    State(s): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<VerifyBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    let b = body(payload)?;
    let engine = s.engine.clone();
    let outcome = blocking(move || engine.verify_response(&id, &b.tutor_response)).await?;
    Ok(reply(StatusCode::OK, outcome))
}

#[derive(Deserialize)]
struct TextBody {
    text: String,
}

async fn detect(State(s): State<AppState>, payload: Result<Json<TextBody>, JsonRejection>) -> Result<Response, ApiError> {
    let b = body(payload)?;
    let engine = s.engine.clone();
    let (label, probs) = blocking(move || engine.detect(&b.text)).await?;
    let name = copilot_core::classify::BINARY_CLASSES[usize::from(label)];
    Ok(reply(StatusCode::OK, json!({ "label": label, "label_name": name, "probs": probs })))
}

async fn classify(State(s): State<AppState>, payload: Result<Json<TextBody>, JsonRejection>) -> Result<Response, ApiError> {
    let b = body(payload)?;
    let engine = s.engine.clone();
    let (label, probs) = blocking(move || engine.classify(&b.text)).await?;
    Ok(reply(StatusCode::OK, json!({ "label": label, "probs": probs })))
}

#[derive(Deserialize)]
struct RecommendBody {
    history: String,
    #[serde(default)]
    method: Option<String>,
}

async fn recommend(State(s): State<AppState>, payload: Result<Json<RecommendBody>, JsonRejection>) -> Result<Response, ApiError> {
    let b = body(payload)?;
    let method = parse_method(b.method.as_deref())?;
    let engine = s.engine.clone();
    let rec = blocking(move || engine.recommend(&b.history, method)).await?;
    Ok(reply(StatusCode::OK, rec))
}

/// Standalone keyword scorer speaking the scorer protocol.
pub fn mock_scorer_router(scorer: MockScorer) -> Router {
    let scorer = Arc::new(scorer);
    Router::new()
        .route(
            "/score",
            post(move |payload: Result<Json<ScoreRequest>, JsonRejection>| {
                let scorer = scorer.clone();
                async move {
                    let req = body(payload)?;
                    let resp = scorer.respond(&req).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "codec_mismatch", e.to_string()))?;
                    Ok::<_, ApiError>(Json(resp))
                }
            }),
        )
        .fallback(not_found)
}
