mod common;

use std::sync::Arc;

use chrono::{TimeZone, Utc};
use kbdistill::client::{FixtureStore, LlmClient, RetryPolicy, TransportOptions};
use kbdistill::corpus::{Event, Relation};
use kbdistill::pipeline::{generate_events, generate_inferences, names_for, GenerationPlan};
use kbdistill::prompt::{SeedPool, TemplateSet};
use serde_json::json;

use common::{serve, MockState};

fn options() -> TransportOptions {
    TransportOptions {
        max_in_flight: 4,
        requests_per_minute: None,
        timeout_secs: 10,
        retry: RetryPolicy {
            max_retries: 2,
            base_delay_ms: 1,
            max_delay_ms: 2,
        },
    }
}

fn pinned() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

fn small_plan() -> GenerationPlan {
    GenerationPlan {
        target_event_count: 6,
        relations: vec![Relation::XReact, Relation::XWant],
        rng_seed: 7,
        ..Default::default()
    }
}

#[tokio::test]
async fn events_reach_unique_target() {
    let (url, _) = serve(MockState::default()).await;
    let client = LlmClient::live(&url, None, &options()).unwrap();
    let (events, report) = generate_events(
        &small_plan(),
        &SeedPool::builtin(),
        &TemplateSet::builtin(),
        &client,
        pinned(),
    )
    .await
    .unwrap();
    assert_eq!(events.len(), 6);
    let unique: std::collections::HashSet<_> = events.iter().map(|e| &e.event).collect();
    assert_eq!(unique.len(), 6);
    assert_eq!(report.collected, 6);
    assert_eq!(
        report.candidates,
        report.collected + report.duplicate_dropped + report.surplus_dropped
    );
    assert!(report.warnings.is_empty());
}

#[tokio::test]
async fn zero_target_makes_no_calls() {
    let (url, state) = serve(MockState::default()).await;
    let client = LlmClient::live(&url, None, &options()).unwrap();
    let plan = GenerationPlan {
        target_event_count: 0,
        ..small_plan()
    };
    let (events, report) = generate_events(
        &plan,
        &SeedPool::builtin(),
        &TemplateSet::builtin(),
        &client,
        pinned(),
    )
    .await
    .unwrap();
    assert!(events.is_empty());
    assert_eq!(report.api_calls, 0);
    assert_eq!(state.requests(), 0);
}

#[tokio::test]
async fn batch_cap_returns_partial_result_with_warning() {
    // every completion repeats the same event
    let state = MockState {
        completions: Arc::new(|body| {
            let n = body["n"].as_u64().unwrap_or(1) as usize;
            let choices: Vec<_> = (0..n)
                .map(|i| json!({"text": " PersonX hums", "index": i, "finish_reason": "stop"}))
                .collect();
            json!({ "choices": choices })
        }),
        ..Default::default()
    };
    let (url, _) = serve(state).await;
    let client = LlmClient::live(&url, None, &options()).unwrap();
    let plan = GenerationPlan {
        max_event_batches: 3,
        ..small_plan()
    };
    let (events, report) = generate_events(
        &plan,
        &SeedPool::builtin(),
        &TemplateSet::builtin(),
        &client,
        pinned(),
    )
    .await
    .unwrap();
    assert_eq!(events.len(), 1);
    assert_eq!(report.batches, 3);
    assert_eq!(report.warnings.len(), 1);
}

#[tokio::test]
async fn inference_accounting_balances() {
    let (url, _) = serve(MockState::default()).await;
    let client = LlmClient::live(&url, None, &options()).unwrap();
    let events: Vec<Event> = [
        "PersonX naps",
        "PersonX calls PersonY",
        "PersonX bakes bread",
    ]
    .iter()
    .map(|e| Event::new(e).unwrap())
    .collect();
    let plan = small_plan();
    let (corpus, report) =
        generate_inferences(&events, &plan, &TemplateSet::builtin(), &client, pinned())
            .await
            .unwrap();
    assert_eq!(report.events, 3);
    for (relation, counts) in &report.per_relation {
        assert!(counts.balances(), "{relation}: {counts:?}");
        assert_eq!(counts.generated, 30);
        assert_eq!(counts.api_calls, 3);
    }
    assert!(report.totals.balances());
    assert_eq!(report.totals.kept, corpus.len());
    assert!(report.totals.duplicate_dropped > 0);
    assert!(report.totals.degenerate_dropped > 0);
    let ids: std::collections::HashSet<_> = corpus.iter().map(|t| &t.id).collect();
    assert_eq!(ids.len(), corpus.len());
    for t in corpus.iter() {
        let names = names_for(&plan, &t.event).unwrap();
        assert!(!t.tail.split(' ').any(|w| w == names.name_x), "{}", t.tail);
        assert_eq!(t.provenance.created_at, pinned());
        assert!(!t.tail.ends_with('.'));
    }
}

#[tokio::test]
async fn failed_inputs_are_recorded_and_skipped() {
    let state = MockState {
        completions: Arc::new(|body| {
            let prompt = body["prompt"].as_str().unwrap();
            if prompt.contains("naps") {
                json!({"choices": 3})
            } else {
                common::scripted_completions(body)
            }
        }),
        ..Default::default()
    };
    let (url, _) = serve(state).await;
    let client = LlmClient::live(&url, None, &options()).unwrap();
    let events = vec![
        Event::new("PersonX naps").unwrap(),
        Event::new("PersonX sings").unwrap(),
    ];
    let (corpus, report) = generate_inferences(
        &events,
        &small_plan(),
        &TemplateSet::builtin(),
        &client,
        pinned(),
    )
    .await
    .unwrap();
    assert_eq!(report.totals.input_failures, 2);
    assert_eq!(report.failures.len(), 2);
    assert!(report.failures.iter().all(|f| f.event == "PersonX naps"));
    assert!(corpus.iter().all(|t| t.event.as_str() == "PersonX sings"));
    assert!(!corpus.is_empty());
}

#[tokio::test]
async fn fixture_replay_is_byte_identical() {
    let (url, _) = serve(MockState::default()).await;
    let dir = tempfile::tempdir().unwrap();
    let store = FixtureStore::new(dir.path());
    let events = vec![Event::new("PersonX paints the house").unwrap()];
    let plan = small_plan();
    let templates = TemplateSet::builtin();
    let recorder = LlmClient::live(&url, None, &options())
        .unwrap()
        .recording_to(store.clone());
    let (live, _) = generate_inferences(&events, &plan, &templates, &recorder, pinned())
        .await
        .unwrap();
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let replay = LlmClient::fixtures(store.clone());
        let (corpus, report) = generate_inferences(&events, &plan, &templates, &replay, pinned())
            .await
            .unwrap();
        assert_eq!(report.http_requests, 0);
        outputs.push(kbdistill::jsonl::to_string(&corpus.entries).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(
        outputs[0],
        kbdistill::jsonl::to_string(&live.entries).unwrap()
    );
}
