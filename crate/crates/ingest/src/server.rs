use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{ConnectInfo, DefaultBodyLimit, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use perfpower_core::assignment::fnv1a64;
use perfpower_core::ClickEvent;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ServiceConfig;
use crate::ratelimit::RateLimiter;
use crate::store::{EventStore, Insert, StoreError};

pub const API_KEY_HEADER: &str = "x-api-key";
const MAX_BODY: usize = 64 * 1024;

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> i64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> i64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as i64)
    }
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<dyn EventStore>,
    limiter: Arc<RateLimiter>,
    api_key: Arc<str>,
    clock: Arc<dyn Clock>,
    trust_forwarded_for: bool,
}

impl AppState {
    pub fn new(store: Arc<dyn EventStore>, config: &ServiceConfig) -> Self {
        AppState {
            store,
            limiter: Arc::new(RateLimiter::new(config.rate_per_second, config.rate_burst)),
            api_key: config.api_read_key.as_str().into(),
            clock: Arc::new(SystemClock),
            trust_forwarded_for: config.trust_forwarded_for,
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn store(&self) -> &Arc<dyn EventStore> {
        &self.store
    }
}

#[derive(Debug, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

fn rejection(status: StatusCode, error: &str, violations: Vec<Violation>) -> Response {
    (status, Json(json!({ "error": error, "violations": violations }))).into_response()
}

fn unavailable(e: &StoreError) -> Response {
    tracing::error!(error = %e, "store failure");
    (
        StatusCode::SERVICE_UNAVAILABLE,
        Json(json!({ "error": "store unavailable", "message": e.to_string() })),
    )
        .into_response()
}

/// Field names that could carry query text, URLs or page content.
pub fn is_forbidden_field(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    lower == "q"
        || ["query", "url", "uri", "href", "link", "search", "title", "snippet", "text", "refer"]
            .iter()
            .any(|needle| lower.contains(needle))
}

fn source_hash(addr: SocketAddr, headers: &HeaderMap, trust_forwarded_for: bool) -> u64 {
    let forwarded = trust_forwarded_for
        .then(|| headers.get("x-forwarded-for")?.to_str().ok())
        .flatten()
        .and_then(|v| v.split(',').next())
        .map(str::trim)
        .filter(|v| !v.is_empty());
    match forwarded {
        Some(ip) => fnv1a64(ip.as_bytes()),
        None => fnv1a64(addr.ip().to_string().as_bytes()),
    }
}

fn is_json(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.split(';').next())
        .is_some_and(|m| m.trim().eq_ignore_ascii_case("application/json"))
}

/// Parses and checks a request body. Errors carry the response to send.
fn parse_event(body: &[u8]) -> Result<ClickEvent, Response> {
    let value: Value = serde_json::from_slice(body).map_err(|e| {
        rejection(
            StatusCode::BAD_REQUEST,
            "malformed json",
            vec![Violation { field: String::new(), message: e.to_string() }],
        )
    })?;
    let Some(object) = value.as_object() else {
        return Err(rejection(
            StatusCode::BAD_REQUEST,
            "malformed event",
            vec![Violation { field: String::new(), message: "expected one JSON object".into() }],
        ));
    };
    let forbidden: Vec<Violation> = object
        .keys()
        .filter(|k| is_forbidden_field(k))
        .map(|k| Violation {
            field: k.clone(),
            message: "query text, URLs and page content are never stored".into(),
        })
        .collect();
    if !forbidden.is_empty() {
        return Err(rejection(StatusCode::BAD_REQUEST, "forbidden field", forbidden));
    }
    let event: ClickEvent = serde_json::from_value(value).map_err(|e| {
        rejection(
            StatusCode::BAD_REQUEST,
            "malformed event",
            vec![Violation { field: String::new(), message: e.to_string() }],
        )
    })?;
    event.validate().map_err(|violations| {
        rejection(
            StatusCode::BAD_REQUEST,
            "invalid event",
            violations
                .into_iter()
                .map(|v| Violation { field: v.field.to_owned(), message: v.message })
                .collect(),
        )
    })?;
    Ok(event)
}

async fn post_event(
    State(state): State<AppState>,
    ConnectInfo(addr): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let source = source_hash(addr, &headers, state.trust_forwarded_for);
    if !state.limiter.try_acquire(source) {
        return rejection(StatusCode::TOO_MANY_REQUESTS, "rate limit exceeded", vec![]);
    }
    if !is_json(&headers) {
        return rejection(
            StatusCode::BAD_REQUEST,
            "unsupported content type",
            vec![Violation { field: "content-type".into(), message: "expected application/json".into() }],
        );
    }
    let event = match parse_event(&body) {
        Ok(e) => e,
        Err(response) => return response,
    };
    let now = state.clock.now_ms();
    let store = Arc::clone(&state.store);
    let id = event.event_id.clone();
    let result = tokio::task::spawn_blocking(move || store.insert(&event, source, now)).await;
    match result {
        Ok(Ok(insert)) => (
            StatusCode::ACCEPTED,
            Json(json!({ "eventId": id, "duplicate": insert == Insert::Duplicate })),
        )
            .into_response(),
        Ok(Err(e)) => unavailable(&e),
        Err(e) => unavailable(&StoreError::Unavailable(e.to_string())),
    }
}

fn key_matches(given: &[u8], expected: &[u8]) -> bool {
    given.len() == expected.len() && given.iter().zip(expected).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
}

fn parse_bound(params: &HashMap<String, String>, name: &str, default: i64) -> Result<i64, Violation> {
    match params.get(name) {
        None => Ok(default),
        Some(v) => v.trim().parse().map_err(|_| Violation {
            field: name.into(),
            message: format!("expected integer milliseconds, got {v:?}"),
        }),
    }
}

async fn get_events(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let authorized = headers
        .get(API_KEY_HEADER)
        .is_some_and(|k| key_matches(k.as_bytes(), state.api_key.as_bytes()));
    if !authorized {
        return rejection(StatusCode::UNAUTHORIZED, "missing or wrong api key", vec![]);
    }
    let bounds = (parse_bound(&params, "since", i64::MIN), parse_bound(&params, "until", i64::MAX));
    let (since, until) = match bounds {
        (Ok(s), Ok(u)) if s <= u => (s, u),
        (Ok(s), Ok(u)) => {
            return rejection(
                StatusCode::BAD_REQUEST,
                "invalid range",
                vec![Violation { field: "since".into(), message: format!("since {s} is after until {u}") }],
            )
        }
        (a, b) => {
            let violations = [a.err(), b.err()].into_iter().flatten().collect();
            return rejection(StatusCode::BAD_REQUEST, "invalid range", violations);
        }
    };
    let store = Arc::clone(&state.store);
    match tokio::task::spawn_blocking(move || store.range(since, until)).await {
        Ok(Ok(records)) => {
            let mut body = String::new();
            for r in &records {
                body.push_str(&serde_json::to_string(&**r).expect("event serializes"));
                body.push('\n');
            }
            ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
        }
        Ok(Err(e)) => unavailable(&e),
        Err(e) => unavailable(&StoreError::Unavailable(e.to_string())),
    }
}

async fn health(State(state): State<AppState>) -> Response {
    match state.store.stats() {
        Ok(stats) => Json(json!({
            "status": "ok",
            "count": stats.count,
            "lastWriteMs": stats.last_write_ms,
        }))
        .into_response(),
        Err(e) => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({ "status": "unavailable", "error": e.to_string() })),
        )
            .into_response(),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/events", post(post_event).get(get_events))
        .route("/healthz", get(health))
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then flushes the store.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let store = Arc::clone(&state.store);
    axum::serve(
        listener,
        router(state).into_make_service_with_connect_info::<SocketAddr>(),
    )
    .with_graceful_shutdown(shutdown)
    .await?;
    store.sync().map_err(std::io::Error::other)
}
