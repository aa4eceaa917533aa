//! HTTP ingestion service for click events.
//!
//! `POST /v1/events` accepts one event per request, `GET /v1/events` exports
//! stored events as line-delimited JSON to holders of the read key, and
//! `GET /healthz` reports the store size. Plain HTTP only: put a TLS
//! terminating proxy in front of it.

pub mod config;
pub mod ratelimit;
pub mod server;
pub mod store;

pub use config::ServiceConfig;
pub use ratelimit::RateLimiter;
pub use server::{router, serve, AppState, Clock, SystemClock, API_KEY_HEADER};
pub use store::{EventStore, FileStore, Insert, StoreError, StoreStats, StoredEvent};
