mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::http::StatusCode;
use kbdistill::client::{
    FixtureStore, GenerationConfig, LlmClient, RetryPolicy, ScorerClient, TransportOptions,
};
use kbdistill::Error;
use serde_json::json;

use common::{serve, MockState};

fn fast_options() -> TransportOptions {
    TransportOptions {
        max_in_flight: 4,
        requests_per_minute: None,
        timeout_secs: 10,
        retry: RetryPolicy {
            max_retries: 3,
            base_delay_ms: 1,
            max_delay_ms: 5,
        },
    }
}

#[tokio::test]
async fn returns_n_completions_in_index_order() {
    let state = MockState {
        completions: Arc::new(|_| {
            json!({"choices": [
                {"text": " b", "index": 1, "finish_reason": "length"},
                {"text": " a", "index": 0, "finish_reason": "stop"}
            ]})
        }),
        ..Default::default()
    };
    let (url, _) = serve(state).await;
    let client = LlmClient::live(&url, None, &fast_options()).unwrap();
    let out = client
        .complete("P", &GenerationConfig::default().with_n(2))
        .await
        .unwrap();
    assert_eq!(
        out.iter().map(|r| r.text.as_str()).collect::<Vec<_>>(),
        vec![" a", " b"]
    );
}

#[tokio::test]
async fn ten_inferences_per_prompt() {
    let (url, _) = serve(MockState::default()).await;
    let client = LlmClient::live(&url, None, &fast_options()).unwrap();
    let out = client
        .complete(
            "Situation 1: Alex naps.\n\nAlex feels",
            &GenerationConfig::default().with_n(10),
        )
        .await
        .unwrap();
    assert_eq!(out.len(), 10);
}

#[tokio::test]
async fn retries_rate_limits_then_succeeds() {
    let state = MockState {
        fail_first: 2,
        fail_status: StatusCode::TOO_MANY_REQUESTS,
        ..Default::default()
    };
    let (url, state) = serve(state).await;
    let client = LlmClient::live(&url, None, &fast_options()).unwrap();
    let out = client
        .complete("P", &GenerationConfig::default())
        .await
        .unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(client.stats().retries, 2);
    assert_eq!(client.stats().http_requests, 3);
    assert_eq!(state.requests(), 3);
}

#[tokio::test]
async fn gives_up_after_retry_budget() {
    let state = MockState {
        fail_first: usize::MAX,
        fail_status: StatusCode::SERVICE_UNAVAILABLE,
        ..Default::default()
    };
    let (url, state) = serve(state).await;
    let client = LlmClient::live(&url, None, &fast_options()).unwrap();
    let err = client
        .complete("P", &GenerationConfig::default())
        .await
        .unwrap_err();
    assert!(
        matches!(err, Error::RetriesExhausted { attempts: 4, .. }),
        "{err}"
    );
    assert!(err.to_string().contains("retries exhausted"));
    assert_eq!(state.requests(), 4);
    assert_eq!(err.exit_code(), 3);
}

#[tokio::test]
async fn client_errors_are_not_retried() {
    let state = MockState {
        fail_first: usize::MAX,
        fail_status: StatusCode::BAD_REQUEST,
        ..Default::default()
    };
    let (url, state) = serve(state).await;
    let client = LlmClient::live(&url, None, &fast_options()).unwrap();
    let err = client
        .complete("P", &GenerationConfig::default())
        .await
        .unwrap_err();
    match err {
        Error::Http { status, body } => {
            assert_eq!(status, 400);
            assert!(body.contains("scripted failure"));
        }
        other => panic!("unexpected {other}"),
    }
    assert_eq!(state.requests(), 1);
}

#[tokio::test]
async fn malformed_payload_is_reported() {
    let state = MockState {
        raw_body: Some("{\"choices\": 7}"),
        ..Default::default()
    };
    let (url, _) = serve(state).await;
    let client = LlmClient::live(&url, None, &fast_options()).unwrap();
    let err = client
        .complete("P", &GenerationConfig::default())
        .await
        .unwrap_err();
    assert!(
        matches!(err, Error::MalformedResponse(ref m) if m.contains("choices")),
        "{err}"
    );
}

#[tokio::test]
async fn wrong_choice_count_is_malformed() {
    let (url, _) = serve(MockState {
        completions: Arc::new(|_| json!({"choices": [{"text": "x", "index": 0}]})),
        ..Default::default()
    })
    .await;
    let client = LlmClient::live(&url, None, &fast_options()).unwrap();
    let err = client
        .complete("P", &GenerationConfig::default().with_n(3))
        .await
        .unwrap_err();
    assert!(matches!(err, Error::MalformedResponse(_)));
}

#[tokio::test]
async fn unreachable_endpoint() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let client = LlmClient::live(&url, None, &fast_options()).unwrap();
    let err = client
        .complete("P", &GenerationConfig::default())
        .await
        .unwrap_err();
    assert!(matches!(err, Error::Unreachable(_)), "{err}");
}

#[tokio::test]
async fn in_flight_requests_are_bounded() {
    let state = MockState {
        delay: Duration::from_millis(30),
        ..Default::default()
    };
    let (url, state) = serve(state).await;
    let options = TransportOptions {
        max_in_flight: 3,
        ..fast_options()
    };
    let client = Arc::new(LlmClient::live(&url, None, &options).unwrap());
    let config = GenerationConfig::default();
    let tasks: Vec<_> = (0..20)
        .map(|i| {
            let client = client.clone();
            let config = config.clone();
            tokio::spawn(async move { client.complete(&format!("P{i}"), &config).await })
        })
        .collect();
    for t in tasks {
        t.await.unwrap().unwrap();
    }
    assert_eq!(state.requests(), 20);
    assert!(state.high_water() <= 3, "high water {}", state.high_water());
    assert!(state.high_water() >= 2);
}

#[tokio::test]
async fn token_bucket_paces_requests() {
    let (url, _) = serve(MockState::default()).await;
    // 20 req/s with a burst of 20: 30 requests need at least ~0.5 s
    let options = TransportOptions {
        requests_per_minute: Some(1200.0),
        ..fast_options()
    };
    let client = LlmClient::live(&url, None, &options).unwrap();
    let start = Instant::now();
    for i in 0..30 {
        client
            .complete(&format!("P{i}"), &GenerationConfig::default())
            .await
            .unwrap();
    }
    assert!(
        start.elapsed() >= Duration::from_millis(400),
        "{:?}",
        start.elapsed()
    );
}

#[tokio::test]
async fn recorded_fixtures_replay_identically() {
    let (url, _) = serve(MockState::default()).await;
    let dir = tempfile::tempdir().unwrap();
    let store = FixtureStore::new(dir.path());
    let config = GenerationConfig::default().with_n(4);
    let live = LlmClient::live(&url, None, &fast_options())
        .unwrap()
        .recording_to(store.clone());
    let recorded = live.complete("Alex feels", &config).await.unwrap();
    let replay = LlmClient::fixtures(store);
    assert!(replay.is_fixture_mode());
    assert_eq!(
        replay.complete("Alex feels", &config).await.unwrap(),
        recorded
    );
}

#[tokio::test]
async fn nll_scoring() {
    let (url, _) = serve(MockState::default()).await;
    let scorer = ScorerClient::new(&url, &fast_options()).unwrap();
    let text = "PersonX naps [GEN] tired";
    let a = scorer.score_nll(text).await.unwrap();
    let b = scorer.score_nll(text).await.unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_tokens, 4);
    assert!(a.total_nll >= 0.0);
    assert!((a.token_mean() - a.total_nll / 4.0).abs() < 1e-12);
    assert!(matches!(
        scorer.score_nll("").await,
        Err(Error::UntokenizableText)
    ));
}

#[tokio::test]
async fn nll_zero_tokens_is_an_error() {
    let app = axum::Router::new().route(
        "/v1/nll",
        axum::routing::post(|| async {
            axum::Json(json!({"results": [{"total_nll": 0.0, "n_tokens": 0}]}))
        }),
    );
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    let scorer = ScorerClient::new(&url, &fast_options()).unwrap();
    assert!(matches!(
        scorer.score_nll("abc").await,
        Err(Error::UntokenizableText)
    ));
}
