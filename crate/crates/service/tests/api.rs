use std::path::Path;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use holmes_core::data::{load_jsonl, save_jsonl};
use holmes_core::evalkit::{elo_run, EloConfig, VoteRecord};
use holmes_core::jury::{build_d2, AppendRefiner, PromptSet, RetryPolicy, SuggestionRecord, TaskStatus};
use holmes_service::*;
use serde_json::{json, Value};
use tower::ServiceExt;

fn seed_tasks(dir: &Path, n: usize) {
    let tasks: Vec<SuggestionRecord> = (0..n)
        .map(|i| SuggestionRecord::pending(&format!("t{i}"), &format!("img{i}"), "explain", "fake the image shows artifacts"))
        .collect();
    save_jsonl(&tasks, &dir.join(TASKS_FILE)).unwrap();
}

fn seed_arena(dir: &Path) {
    let entries = vec![
        ArenaEntry::new("img1", "ours", "fake the image shows periodic upsampling artifacts"),
        ArenaEntry::new("img1", "base", "fake the lighting is odd"),
    ];
    save_jsonl(&entries, &dir.join(ARENA_FILE)).unwrap();
}

fn app(cfg: &ServiceConfig) -> Router {
    router(Coordinator::open(cfg).unwrap(), cfg)
}

async fn call(app: &Router, method: &str, uri: &str, session: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(s) = session {
        req = req.header(SESSION_HEADER, s);
    }
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), 1 << 20).await.unwrap();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

#[tokio::test]
async fn empty_queue_is_no_content() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&ServiceConfig::new(dir.path()));
    assert_eq!(call(&app, "GET", "/tasks/next", None, None).await.0, StatusCode::NO_CONTENT);
}

#[tokio::test]
async fn suggestion_round_trip_yields_one_d2_pair() {
    let dir = tempfile::tempdir().unwrap();
    seed_tasks(dir.path(), 3);
    let app = app(&ServiceConfig::new(dir.path()));
    let (status, body) = call(&app, "GET", "/tasks/next", Some("alice"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["v"], 1);
    let id = body["task"]["item_id"].as_str().unwrap().to_string();
    assert_eq!(id, "t0");
    assert!(body["lease"]["expires_in_ms"].as_u64().unwrap() > 590_000);

    let (status, body) =
        call(&app, "POST", &format!("/tasks/{id}/suggestions"), Some("alice"), Some(json!({ "v": 1, "text": "name the grid" }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["task"]["status"], "suggested");

    // durable before the response
    let mut tasks: Vec<SuggestionRecord> = load_jsonl(&dir.path().join(TASKS_FILE)).unwrap();
    assert_eq!(tasks.iter().filter(|t| t.status == TaskStatus::Suggested).count(), 1);
    let d2 = build_d2(&mut tasks, &AppendRefiner::new("with a visible grid"), &PromptSet::default(), &RetryPolicy::immediate(1));
    assert_eq!(d2.pairs.len(), 1);
    assert_eq!(d2.pairs[0].id, "d2:t0");
}

#[tokio::test]
async fn suggestion_errors() {
    let dir = tempfile::tempdir().unwrap();
    seed_tasks(dir.path(), 2);
    let app = app(&ServiceConfig::new(dir.path()));
    let post = |id: &'static str, who: &'static str, text: &'static str| {
        let app = app.clone();
        async move { call(&app, "POST", &format!("/tasks/{id}/suggestions"), Some(who), Some(json!({ "text": text }))).await.0 }
    };
    assert_eq!(post("nope", "a", "x").await, StatusCode::NOT_FOUND);
    assert_eq!(post("t0", "a", "  ").await, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(call(&app, "POST", "/tasks/t1/lease", Some("a"), None).await.0, StatusCode::OK);
    assert_eq!(post("t1", "b", "x").await, StatusCode::CONFLICT);
    assert_eq!(post("t1", "a", "x").await, StatusCode::OK);
    // no status regression
    assert_eq!(post("t1", "a", "again").await, StatusCode::CONFLICT);
    assert_eq!(call(&app, "POST", "/tasks/t1/lease", Some("a"), None).await.0, StatusCode::CONFLICT);
    let (status, body) = call(&app, "POST", "/tasks/t0/suggestions", None, Some(json!({ "v": 9, "text": "x" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("version"));
}

#[tokio::test]
async fn concurrent_leases_conflict_until_expiry() {
    let dir = tempfile::tempdir().unwrap();
    seed_tasks(dir.path(), 1);
    let mut cfg = ServiceConfig::new(dir.path());
    cfg.lease = Duration::from_millis(200);
    let app = app(&cfg);
    let (a, b) = tokio::join!(
        call(&app, "POST", "/tasks/t0/lease", Some("alice"), None),
        call(&app, "POST", "/tasks/t0/lease", Some("bob"), None)
    );
    let mut codes = [a.0, b.0];
    codes.sort();
    assert_eq!(codes, [StatusCode::OK, StatusCode::CONFLICT]);
    let loser = if a.0 == StatusCode::OK { "bob" } else { "alice" };
    assert_eq!(call(&app, "GET", "/tasks/next", Some(loser), None).await.0, StatusCode::NO_CONTENT);
    tokio::time::sleep(Duration::from_millis(250)).await;
    assert_eq!(call(&app, "POST", "/tasks/t0/lease", Some(loser), None).await.0, StatusCode::OK);
}

async fn vote(app: &Router, winner: &str) -> (StatusCode, Value, String) {
    let (status, m) = call(app, "GET", "/arena/next", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(m["match"].get("model_a").is_none(), "model names must stay hidden");
    let id = m["match"]["match_id"].as_str().unwrap().to_string();
    let (s, body) = call(app, "POST", "/arena/vote", None, Some(json!({ "v": 1, "match_id": id, "winner": winner }))).await;
    (s, body, id)
}

#[tokio::test]
async fn arena_votes_drive_the_elo_table() {
    let dir = tempfile::tempdir().unwrap();
    seed_arena(dir.path());
    let cfg = ServiceConfig::new(dir.path());
    let app = app(&cfg);

    let (status, body, id) = vote(&app, "choice_A").await;
    assert_eq!(status, StatusCode::OK);
    let (a, b) = (body["vote"]["model_a"].as_str().unwrap().to_string(), body["vote"]["model_b"].as_str().unwrap().to_string());
    let (_, elo) = call(&app, "GET", "/elo", None, None).await;
    assert_eq!(elo["ratings"][&a], 1002.0);
    assert_eq!(elo["ratings"][&b], 998.0);

    let dup = call(&app, "POST", "/arena/vote", None, Some(json!({ "match_id": id, "winner": "choice_B" }))).await;
    assert_eq!(dup.0, StatusCode::CONFLICT);
    assert_eq!(call(&app, "GET", "/elo", None, None).await.1, elo);

    let (status, body, _) = vote(&app, "None").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("unexpected vote"));

    let (status, _, _) = vote(&app, "choice_C").await;
    assert_eq!(status, StatusCode::OK);
    let (_, after) = call(&app, "GET", "/elo", None, None).await;
    let (ra, rb) = (after["ratings"][&a].as_f64().unwrap(), after["ratings"][&b].as_f64().unwrap());
    assert!(ra < 1002.0 && rb > 998.0);
    assert!((ra + rb - 2000.0).abs() < 1e-9);

    // the table equals a replay of the persisted log, also after a restart
    let votes: Vec<VoteRecord> = load_jsonl(&dir.path().join(VOTES_FILE)).unwrap();
    let replay = elo_run(&votes, &EloConfig::default()).unwrap();
    assert_eq!(serde_json::to_value(&replay.ratings).unwrap(), after["ratings"]);
    let restarted = self::app(&cfg);
    assert_eq!(call(&restarted, "GET", "/elo", None, None).await.1.to_string(), after.to_string());
}

#[tokio::test]
async fn arena_needs_two_models() {
    let dir = tempfile::tempdir().unwrap();
    save_jsonl(&[ArenaEntry::new("img1", "ours", "fake")], &dir.path().join(ARENA_FILE)).unwrap();
    let app = app(&ServiceConfig::new(dir.path()));
    assert_eq!(call(&app, "GET", "/arena/next", None, None).await.0, StatusCode::CONFLICT);
    let unknown = call(&app, "POST", "/arena/vote", None, Some(json!({ "match_id": "m", "winner": "choice_A" }))).await;
    assert_eq!(unknown.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn token_is_enforced_when_configured() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ServiceConfig::new(dir.path());
    cfg.token = Some("s3cret".into());
    let app = app(&cfg);
    assert_eq!(call(&app, "GET", "/elo", None, None).await.0, StatusCode::UNAUTHORIZED);
    let req = Request::get("/elo").header(TOKEN_HEADER, "s3cret").body(Body::empty()).unwrap();
    assert_eq!(app.oneshot(req).await.unwrap().status(), StatusCode::OK);
}

#[tokio::test]
async fn static_bundle_is_served() {
    let dir = tempfile::tempdir().unwrap();
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>ui</html>").unwrap();
    let mut cfg = ServiceConfig::new(dir.path());
    cfg.ui_dir = Some(ui.path().to_path_buf());
    let app = app(&cfg);
    let resp = app.oneshot(Request::get("/index.html").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
}
