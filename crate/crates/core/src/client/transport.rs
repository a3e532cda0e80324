//! JSON-over-HTTP POST with bounded concurrency, client-side rate limiting
//! and retry with exponential backoff.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, Semaphore};

use crate::error::{excerpt, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based): doubling from the base,
    /// capped, with +-25% jitter.
    fn delay(&self, attempt: u32) -> Duration {
        let exp = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.max_delay_ms) as f64;
        let jitter = rand::rng().random_range(-0.25..=0.25);
        Duration::from_secs_f64((exp * (1.0 + jitter)).max(0.0) / 1000.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransportOptions {
    pub max_in_flight: usize,
    pub requests_per_minute: Option<f64>,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            max_in_flight: 8,
            requests_per_minute: None,
            timeout_secs: 60,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Default)]
pub(crate) struct Counters {
    pub http_requests: AtomicU64,
    pub retries: AtomicU64,
}

struct TokenBucket {
    rate_per_sec: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    fn new(requests_per_minute: f64) -> Self {
        let rate_per_sec = requests_per_minute / 60.0;
        let capacity = rate_per_sec.max(1.0);
        TokenBucket {
            rate_per_sec,
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    async fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().await;
                let now = Instant::now();
                let refill = now.duration_since(state.1).as_secs_f64() * self.rate_per_sec;
                state.0 = (state.0 + refill).min(self.capacity);
                state.1 = now;
                if state.0 >= 1.0 {
                    state.0 -= 1.0;
                    return;
                }
                (1.0 - state.0) / self.rate_per_sec
            };
            tokio::time::sleep(Duration::from_secs_f64(wait)).await;
        }
    }
}

enum Failure {
    Retryable { message: String, connect: bool },
    Fatal(Error),
}

#[derive(Clone)]
pub(crate) struct Transport {
    http: reqwest::Client,
    base_url: String,
    api_key: Option<String>,
    in_flight: Arc<Semaphore>,
    bucket: Option<Arc<TokenBucket>>,
    retry: RetryPolicy,
    pub counters: Arc<Counters>,
}

impl Transport {
    pub fn new(
        base_url: &str,
        api_key: Option<String>,
        options: &TransportOptions,
    ) -> Result<Self> {
        if options.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        if let Some(rpm) = options.requests_per_minute {
            if rpm.is_nan() || rpm <= 0.0 {
                return Err(Error::Config("requests_per_minute must be positive".into()));
            }
        }
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(options.timeout_secs.max(1)))
            .build()
            .map_err(|e| Error::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(Transport {
            http,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            in_flight: Arc::new(Semaphore::new(options.max_in_flight)),
            bucket: options
                .requests_per_minute
                .map(|r| Arc::new(TokenBucket::new(r))),
            retry: options.retry,
            counters: Arc::new(Counters::default()),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub async fn post_json<B: Serialize, R: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<R> {
        let url = format!("{}{}", self.base_url, path);
        let mut attempt = 0u32;
        let mut only_connect_failures = true;
        loop {
            match self.attempt(&url, body).await {
                Ok(text) => {
                    return serde_json::from_str(&text)
                        .map_err(|e| Error::MalformedResponse(format!("{e}: {}", excerpt(&text))));
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable { message, connect }) => {
                    only_connect_failures &= connect;
                    if attempt >= self.retry.max_retries {
                        if only_connect_failures {
                            return Err(Error::Unreachable(format!("{url}: {message}")));
                        }
                        return Err(Error::RetriesExhausted {
                            attempts: attempt + 1,
                            last: message,
                        });
                    }
                    log::debug!("retrying {url} after: {message}");
                    tokio::time::sleep(self.retry.delay(attempt)).await;
                    attempt += 1;
                    self.counters.retries.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
    }

    async fn attempt<B: Serialize>(&self, url: &str, body: &B) -> Result<String, Failure> {
        if let Some(bucket) = &self.bucket {
            bucket.acquire().await;
        }
        let _permit = self
            .in_flight
            .acquire()
            .await
            .expect("semaphore is never closed");
        self.counters.http_requests.fetch_add(1, Ordering::Relaxed);
        let mut request = self.http.post(url).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().await.map_err(|e| Failure::Retryable {
            connect: e.is_connect(),
            message: e.to_string(),
        })?;
        let status = response.status();
        let text = response.text().await.map_err(|e| Failure::Retryable {
            connect: false,
            message: e.to_string(),
        })?;
        if status.is_success() {
            Ok(text)
        } else if status.as_u16() == 429 || status.is_server_error() {
            Err(Failure::Retryable {
                connect: false,
                message: format!("HTTP {}: {}", status.as_u16(), excerpt(&text)),
            })
        } else {
            Err(Failure::Fatal(Error::Http {
                status: status.as_u16(),
                body: excerpt(&text),
            }))
        }
    }
}
