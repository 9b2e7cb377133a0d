use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use holmes_core::jury::SuggestionRecord;
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::store::{Coordinator, Lease, StoreError};
use crate::{ServiceConfig, API_VERSION, SESSION_HEADER, TOKEN_HEADER};

struct ApiError(StatusCode, String);

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::Conflict(_) => StatusCode::CONFLICT,
            StoreError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::Data(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "v": API_VERSION, "error": self.1 }))).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn ok(body: Value) -> ApiResult {
    let mut body = body;
    body["v"] = json!(API_VERSION);
    Ok(Json(body).into_response())
}

fn session(headers: &HeaderMap) -> String {
    headers.get(SESSION_HEADER).and_then(|v| v.to_str().ok()).unwrap_or("anonymous").to_string()
}

fn lease_json(task: &SuggestionRecord, lease: &Lease) -> Value {
    let ms = lease.expires.saturating_duration_since(std::time::Instant::now()).as_millis() as u64;
    json!({ "task": task, "lease": { "session": lease.session, "expires_in_ms": ms } })
}

/// Accepts a body with or without `"v"`, rejecting unknown versions.
fn check_version(v: Option<u32>) -> Result<(), ApiError> {
    match v {
        Some(v) if v != API_VERSION => {
            Err(ApiError(StatusCode::UNPROCESSABLE_ENTITY, format!("unsupported schema version {v}")))
        }
        _ => Ok(()),
    }
}

async fn next_task(State(c): State<Coordinator>, headers: HeaderMap) -> ApiResult {
    match c.next_task(&session(&headers)) {
        Some((task, lease)) => ok(lease_json(&task, &lease)),
        None => Ok(StatusCode::NO_CONTENT.into_response()),
    }
}

async fn list_tasks(State(c): State<Coordinator>) -> ApiResult {
    ok(json!({ "tasks": c.snapshot().tasks }))
}

async fn lease_task(State(c): State<Coordinator>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    let (task, lease) = c.lease_task(&id, &session(&headers))?;
    ok(lease_json(&task, &lease))
}

#[derive(Deserialize)]
struct SuggestionBody {
    v: Option<u32>,
    text: String,
}

async fn submit_suggestion(
    State(c): State<Coordinator>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(body): Json<SuggestionBody>,
) -> ApiResult {
    check_version(body.v)?;
    let task = c.submit_suggestion(&id, &session(&headers), &body.text)?;
    ok(json!({ "task": task }))
}

async fn next_match(State(c): State<Coordinator>) -> ApiResult {
    match c.next_match() {
        Some(m) => ok(json!({ "match": m })),
        None => Err(ApiError(StatusCode::CONFLICT, "the arena needs two models with explanations of a shared image".into())),
    }
}

#[derive(Deserialize)]
struct VoteBody {
    v: Option<u32>,
    match_id: String,
    winner: String,
}

async fn vote(State(c): State<Coordinator>, Json(body): Json<VoteBody>) -> ApiResult {
    check_version(body.v)?;
    let vote = c.vote(&body.match_id, &body.winner)?;
    ok(json!({ "vote": vote }))
}

async fn elo(State(c): State<Coordinator>) -> ApiResult {
    let snap = c.snapshot();
    let ranking: Vec<Value> = snap.elo.ranking().into_iter().map(|(m, r)| json!({ "model": m, "rating": r })).collect();
    ok(json!({ "votes": snap.votes, "ratings": snap.elo.ratings, "ranking": ranking, "models": c.models() }))
}

async fn require_token(
    State(token): State<Option<String>>,
    headers: HeaderMap,
    req: axum::extract::Request,
    next: Next,
) -> Response {
    if let Some(t) = &token {
        if headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok()) != Some(t.as_str()) {
            return ApiError(StatusCode::UNAUTHORIZED, "missing or wrong token".into()).into_response();
        }
    }
    next.run(req).await
}

pub fn router(coordinator: Coordinator, cfg: &ServiceConfig) -> Router {
    let api = Router::new()
        .route("/tasks", get(list_tasks))
        .route("/tasks/next", get(next_task))
        .route("/tasks/{id}/lease", post(lease_task))
        .route("/tasks/{id}/suggestions", post(submit_suggestion))
        .route("/arena/next", get(next_match))
        .route("/arena/vote", post(vote))
        .route("/elo", get(elo))
        .with_state(coordinator)
        .layer(middleware::from_fn_with_state(cfg.token.clone(), require_token));
    let mut app = api;
    if let Some(dir) = &cfg.image_dir {
        app = app.nest_service("/images", ServeDir::new(dir));
    }
    if let Some(dir) = &cfg.ui_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app
}
