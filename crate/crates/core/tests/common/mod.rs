//! In-process mock of the completion and scoring services.

#![allow(dead_code)]

pub mod e2e;
pub mod golden;

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub type Responder = Arc<dyn Fn(&Value) -> Value + Send + Sync>;

#[derive(Clone)]
pub struct MockState {
    pub requests: Arc<AtomicUsize>,
    pub in_flight: Arc<AtomicUsize>,
    pub high_water: Arc<AtomicUsize>,
    /// The first `fail_first` requests answer with `fail_status`.
    pub fail_first: usize,
    pub fail_status: StatusCode,
    pub delay: Duration,
    pub completions: Responder,
    pub raw_body: Option<&'static str>,
}

impl Default for MockState {
    fn default() -> Self {
        MockState {
            requests: Arc::default(),
            in_flight: Arc::default(),
            high_water: Arc::default(),
            fail_first: 0,
            fail_status: StatusCode::TOO_MANY_REQUESTS,
            delay: Duration::ZERO,
            completions: Arc::new(scripted_completions),
            raw_body: None,
        }
    }
}

impl MockState {
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn high_water(&self) -> usize {
        self.high_water.load(Ordering::SeqCst)
    }
}

struct InFlight(Arc<AtomicUsize>);

impl Drop for InFlight {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

async fn enter(state: &MockState) -> Result<InFlight, Response> {
    let n = state.requests.fetch_add(1, Ordering::SeqCst);
    let now = state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    state.high_water.fetch_max(now, Ordering::SeqCst);
    let guard = InFlight(state.in_flight.clone());
    if !state.delay.is_zero() {
        tokio::time::sleep(state.delay).await;
    }
    if n < state.fail_first {
        return Err((
            state.fail_status,
            Json(json!({"error": {"message": "scripted failure"}})),
        )
            .into_response());
    }
    Ok(guard)
}

async fn completions(State(state): State<MockState>, Json(body): Json<Value>) -> Response {
    let _guard = match enter(&state).await {
        Ok(g) => g,
        Err(r) => return r,
    };
    if let Some(raw) = state.raw_body {
        return (StatusCode::OK, raw).into_response();
    }
    Json((state.completions)(&body)).into_response()
}

async fn nll(State(state): State<MockState>, Json(body): Json<Value>) -> Response {
    let _guard = match enter(&state).await {
        Ok(g) => g,
        Err(r) => return r,
    };
    let results: Vec<Value> = body["texts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| {
            let (total, n) = mock_nll(t.as_str().unwrap());
            json!({"total_nll": total, "n_tokens": n})
        })
        .collect();
    Json(json!({ "results": results })).into_response()
}

async fn score(State(state): State<MockState>, Json(body): Json<Value>) -> Response {
    let _guard = match enter(&state).await {
        Ok(g) => g,
        Err(r) => return r,
    };
    let scores: Vec<f64> = body["triples"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| {
            let key = format!("{}|{}|{}", t["event"], t["relation"], t["tail"]);
            (hash64(&key) % 1000) as f64 / 999.0
        })
        .collect();
    Json(json!({ "scores": scores })).into_response()
}

pub fn hash64(s: &str) -> u64 {
    let d = Sha256::digest(s.as_bytes());
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// Deterministic NLL: 1.5 nats per whitespace token plus a content-keyed offset.
pub fn mock_nll(text: &str) -> (f64, u64) {
    let n = text.split_whitespace().count() as u64;
    let total = 1.5 * n as f64 + (hash64(text) % 10) as f64 / 10.0;
    (total, n)
}

pub async fn serve(state: MockState) -> (String, MockState) {
    let app = Router::new()
        .route("/v1/completions", post(completions))
        .route("/v1/nll", post(nll))
        .route("/v1/score", post(score))
        .with_state(state.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr: SocketAddr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    (format!("http://{addr}"), state)
}

/// Starts a mock server on a dedicated runtime thread; usable from sync tests.
pub fn serve_blocking(state: MockState) -> (String, MockState) {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let served = serve(state).await;
            tx.send(served).unwrap();
            std::future::pending::<()>().await;
        });
    });
    rx.recv().unwrap()
}

const EVENT_VERBS: [&str; 12] = [
    "buys a boat",
    "sells PersonX's car",
    "visits PersonY",
    "paints the house",
    "writes a song",
    "loses the keys",
    "calls PersonY",
    "plants a tree",
    "fixes the roof",
    "reads the news",
    "bakes bread",
    "walks the dog",
];

const TAILS: [&str; 10] = [
    "tired",
    "happy",
    "to rest",
    "to call a friend",
    "ok",
    "relieved",
    "to buy groceries",
    "Alex is busy",
    "proud",
    "tired.",
];

fn choice(text: String) -> Value {
    json!({"text": text, "index": 0, "finish_reason": "stop"})
}

/// Event prompts (ending in `Event:`) get two numbered events per completion;
/// relation prompts get tails drawn from a fixed list that includes
/// duplicates and degenerate entries.
pub fn scripted_completions(body: &Value) -> Value {
    let prompt = body["prompt"].as_str().unwrap_or_default();
    let n = body["n"].as_u64().unwrap_or(1) as usize;
    let h = hash64(prompt);
    let choices: Vec<Value> = (0..n)
        .map(|i| {
            let k = (h as usize).wrapping_add(i * 7);
            let text = if prompt.ends_with("Event:") {
                let next = prompt
                    .rsplit("\n\n")
                    .next()
                    .and_then(|l| l.split('.').next())
                    .and_then(|d| d.trim().parse::<usize>().ok())
                    .unwrap_or(11);
                format!(
                    " PersonX {}\n\n{}. Event: PersonX {}",
                    EVENT_VERBS[k % EVENT_VERBS.len()],
                    next + 1,
                    EVENT_VERBS[(k / 3 + i) % EVENT_VERBS.len()]
                )
            } else {
                format!(" {}\n\nSituation 99:", TAILS[(k + i) % TAILS.len()])
            };
            let mut c = choice(text);
            c["index"] = json!(i);
            c
        })
        .collect();
    json!({ "choices": choices })
}
