use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::Value;

use crate::error::CliError;

const RETRIES: u32 = 12;

pub fn client() -> Result<Client, CliError> {
    Client::builder()
        .timeout(Duration::from_secs(30))
        .build()
        .map_err(|e| CliError::Io(format!("http client: {e}")))
}

fn unreachable(url: &str, e: reqwest::Error) -> CliError {
    CliError::Io(format!("{url}: {e}"))
}

pub fn health_count(client: &Client, base: &str) -> Result<u64, CliError> {
    let url = format!("{base}/healthz");
    let resp = client.get(&url).send().map_err(|e| unreachable(&url, e))?;
    if !resp.status().is_success() {
        return Err(CliError::Io(format!("{url}: status {}", resp.status())));
    }
    let body: Value = serde_json::from_str(&resp.text().map_err(|e| unreachable(&url, e))?)
        .map_err(|e| CliError::Io(format!("{url}: {e}")))?;
    body["count"]
        .as_u64()
        .ok_or_else(|| CliError::Io(format!("{url}: no count in {body}")))
}

pub enum PostOutcome {
    Stored,
    Duplicate,
    Rejected(String),
}

/// Posts one event, backing off while the service answers 429.
pub fn post_event(client: &Client, base: &str, json: &str) -> Result<PostOutcome, CliError> {
    let url = format!("{base}/v1/events");
    let mut delay = Duration::from_millis(25);
    for _ in 0..=RETRIES {
        let resp = client
            .post(&url)
            .header("content-type", "application/json")
            .body(json.to_owned())
            .send()
            .map_err(|e| unreachable(&url, e))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| unreachable(&url, e))?;
        match status {
            StatusCode::ACCEPTED => {
                let body: Value = serde_json::from_str(&text).unwrap_or(Value::Null);
                return Ok(if body["duplicate"] == Value::Bool(true) {
                    PostOutcome::Duplicate
                } else {
                    PostOutcome::Stored
                });
            }
            StatusCode::TOO_MANY_REQUESTS | StatusCode::SERVICE_UNAVAILABLE => {
                thread::sleep(delay);
                delay = (delay * 2).min(Duration::from_secs(2));
            }
            StatusCode::BAD_REQUEST => return Ok(PostOutcome::Rejected(text)),
            other => return Err(CliError::Io(format!("{url}: status {other}: {text}"))),
        }
    }
    Err(CliError::Io(format!("{url}: still throttled after {RETRIES} retries")))
}

pub fn fetch_events(
    client: &Client,
    base: &str,
    api_key: &str,
    since: Option<i64>,
    until: Option<i64>,
) -> Result<String, CliError> {
    let mut params = Vec::new();
    if let Some(s) = since {
        params.push(format!("since={s}"));
    }
    if let Some(u) = until {
        params.push(format!("until={u}"));
    }
    let url = if params.is_empty() {
        format!("{base}/v1/events")
    } else {
        format!("{base}/v1/events?{}", params.join("&"))
    };
    let resp = client
        .get(&url)
        .header("x-api-key", api_key)
        .send()
        .map_err(|e| unreachable(&url, e))?;
    let status = resp.status();
    let text = resp.text().map_err(|e| unreachable(&url, e))?;
    match status {
        StatusCode::OK => Ok(text),
        StatusCode::UNAUTHORIZED => Err(CliError::Config(format!("{url}: read key rejected"))),
        other => Err(CliError::Io(format!("{url}: status {other}: {text}"))),
    }
}
