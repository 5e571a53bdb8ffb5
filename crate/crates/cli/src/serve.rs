//! HTTP endpoints for the listening test.
//!
//! `GET /api/manifest`, `GET /api/audio/{id}`, `POST /api/rating` and
//! `GET /api/progress/{listener_id}`. Ratings go through one mutex-guarded
//! writer and are synced to disk before the 201 is sent.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lombard_core::evaluation::{append_rating, read_ratings, validate_rating, RatingRecord, TestKind, TestManifest};
use serde_json::{json, Value};

use crate::commands::required;
use crate::eval::ServeArgs;
use crate::{CliError, CliResult};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

/// Pairs rated so far, per listener.
#[derive(Debug, Default)]
struct RatingLog {
    rated: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug)]
pub struct AppState {
    manifest: TestManifest,
    ratings_path: PathBuf,
    log: Mutex<RatingLog>,
}

impl AppState {
    /// Earlier ratings in `ratings_path` count as already submitted.
    pub fn new(manifest: TestManifest, ratings_path: PathBuf) -> CliResult<Self> {
        let mut log = RatingLog::default();
        if ratings_path.exists() {
            for r in read_ratings(&ratings_path)? {
                log.rated.entry(r.listener_id).or_default().insert(r.pair_id);
            }
        }
        Ok(AppState { manifest, ratings_path, log: Mutex::new(log) })
    }
}

fn field_errors(errors: Vec<(String, String)>) -> Response {
    let list: Vec<Value> = errors.into_iter().map(|(f, m)| json!({"field": f, "message": m})).collect();
    (StatusCode::BAD_REQUEST, Json(json!({ "errors": list }))).into_response()
}

async fn manifest(State(st): State<Arc<AppState>>) -> Response {
    Json(&st.manifest).into_response()
}

async fn audio(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(pair) = st.manifest.pair(&id) else {
        return (StatusCode::NOT_FOUND, Json(json!({"error": format!("unknown pair `{id}`")}))).into_response();
    };
    match tokio::fs::read(st.manifest.stitched_path(pair)).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response(),
        Err(e) => {
            tracing::error!(pair = %id, error = %e, "stimulus audio unreadable");
            (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": "stimulus audio unavailable"}))).into_response()
        }
    }
}

/// Pulls the record out of an arbitrary JSON body, naming every bad field.
/// A missing timestamp is filled with the server time.
fn parse_rating(body: &[u8]) -> Result<RatingRecord, Vec<(String, String)>> {
    let v: Value = serde_json::from_slice(body).map_err(|e| vec![("body".to_string(), format!("invalid JSON: {e}"))])?;
    let Some(obj) = v.as_object() else {
        return Err(vec![("body".into(), "expected a JSON object".into())]);
    };
    let mut errs = Vec::new();
    let mut text = |k: &str| match obj.get(k) {
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            errs.push((k.to_string(), "must be a string".to_string()));
            None
        }
        None => {
            errs.push((k.to_string(), "is required".to_string()));
            None
        }
    };
    let pair_id = text("pair_id");
    let listener_id = text("listener_id");
    let kind = text("test_kind");
    let test_kind = kind.and_then(|k| match k.parse::<TestKind>() {
        Ok(t) => Some(t),
        Err(_) => {
            errs.push(("test_kind".into(), format!("unknown test kind `{k}`")));
            None
        }
    });
    let value = match obj.get("value") {
        Some(Value::Number(n)) => match n.as_i64().and_then(|i| i32::try_from(i).ok()) {
            Some(i) => Some(i),
            None => {
                errs.push(("value".into(), "must be an integer".into()));
                None
            }
        },
        Some(_) => {
            errs.push(("value".into(), "must be an integer".into()));
            None
        }
        None => {
            errs.push(("value".into(), "is required".into()));
            None
        }
    };
    let timestamp = match obj.get("timestamp_iso8601") {
        None | Some(Value::Null) => Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)),
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            errs.push(("timestamp_iso8601".into(), "must be a string".into()));
            None
        }
    };
    match (pair_id, listener_id, test_kind, value, timestamp) {
        (Some(pair_id), Some(listener_id), Some(test_kind), Some(value), Some(timestamp)) if errs.is_empty() => {
            Ok(RatingRecord { pair_id, listener_id, test_kind, value, timestamp })
        }
        _ => Err(errs),
    }
}

async fn post_rating(State(st): State<Arc<AppState>>, body: Bytes) -> Response {
    let record = match parse_rating(&body) {
        Ok(r) => r,
        Err(errs) => return field_errors(errs),
    };
    if let Err(errs) = validate_rating(&st.manifest, &record) {
        return field_errors(errs.into_iter().map(|e| (e.field.to_string(), e.message)).collect());
    }
    let mut log = st.log.lock().unwrap_or_else(|p| p.into_inner());
    if log.rated.get(&record.listener_id).is_some_and(|s| s.contains(&record.pair_id)) {
        let msg = format!("listener `{}` already rated pair `{}`", record.listener_id, record.pair_id);
        return (StatusCode::CONFLICT, Json(json!({"errors": [{"field": "pair_id", "message": msg}]}))).into_response();
    }
    if let Err(e) = append_rating(&st.ratings_path, &record) {
        tracing::error!(error = %e, "rating not stored");
        return (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": "rating could not be stored"}))).into_response();
    }
    log.rated.entry(record.listener_id.clone()).or_default().insert(record.pair_id.clone());
    (StatusCode::CREATED, Json(json!({"stored": record}))).into_response()
}

async fn progress(State(st): State<Arc<AppState>>, UrlPath(listener): UrlPath<String>) -> Response {
    let log = st.log.lock().unwrap_or_else(|p| p.into_inner());
    let done = log.rated.get(&listener).cloned().unwrap_or_default();
    drop(log);
    let mut by_kind = serde_json::Map::new();
    for kind in [TestKind::Similarity, TestKind::Ccr] {
        let ids: Vec<&str> = st.manifest.pairs.iter().filter(|p| p.test_kind == kind).map(|p| p.id.as_str()).collect();
        let rated = ids.iter().filter(|id| done.contains(**id)).count();
        by_kind.insert(kind.to_string(), json!({"rated": rated, "total": ids.len()}));
    }
    let total = st.manifest.pairs.len();
    Json(json!({
        "listener_id": listener,
        "rated": done.len(),
        "total": total,
        "remaining": total.saturating_sub(done.len()),
        "rated_pair_ids": done,
        "by_kind": by_kind,
    }))
    .into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/manifest", get(manifest))
        .route("/api/audio/{id}", get(audio))
        .route("/api/rating", post(post_rating))
        .route("/api/progress/{listener_id}", get(progress))
        .with_state(state)
}

pub fn run(a: ServeArgs) -> CliResult<()> {
    let manifest_path = required(a.manifest, "manifest")?;
    let manifest = TestManifest::load(&manifest_path)?;
    let ratings = crate::eval::ratings_path(&manifest_path, a.ratings);
    let addr: SocketAddr = a
        .addr
        .as_deref()
        .unwrap_or(DEFAULT_ADDR)
        .parse()
        .map_err(|e| CliError::Usage(format!("bad --addr: {e}")))?;
    let state = Arc::new(AppState::new(manifest, ratings)?);
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| CliError::Runtime(format!("bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
        // the test harness reads this line to find the port
        println!("listening on http://{local}");
        use std::io::Write;
        let _ = std::io::stdout().flush();
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_fields_are_all_named() {
        let errs = parse_rating(br#"{"pair_id": 3, "test_kind": "mushra", "value": 1.5}"#).unwrap_err();
        let fields: Vec<&str> = errs.iter().map(|e| e.0.as_str()).collect();
        assert_eq!(fields, ["pair_id", "listener_id", "test_kind", "value"]);
        assert_eq!(parse_rating(b"nope").unwrap_err()[0].0, "body");
    }

    #[test]
    fn timestamp_defaults_to_now() {
        let r = parse_rating(br#"{"pair_id": "s0001", "listener_id": "a", "test_kind": "ccr", "value": -2}"#).unwrap();
        assert!(chrono::DateTime::parse_from_rfc3339(&r.timestamp).is_ok());
        assert_eq!(r.value, -2);
    }
}
