//! Drives the built binary through every stage against the mock server.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_kbdistill")
}

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run_cli(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn write_json(path: &Path, value: &Value) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

fn plan() -> Value {
    json!({
        "target_event_count": 6,
        "relations": ["xReact", "xWant", "HinderedBy"],
        "inferences_per_input": 10
    })
}

/// Records fixtures for the two generation stages into `fixture_dir`.
pub fn record(dir: &Path, url: &str, fixture_dir: &Path) {
    std::fs::create_dir_all(fixture_dir).unwrap();
    let config = dir.join("record.json");
    write_json(
        &config,
        &json!({
            "endpoint": {"base_url": url, "fixture_dir": fixture_dir, "record": true,
                         "transport": {"retry": {"base_delay_ms": 1, "max_delay_ms": 2}}},
            "plan": plan(),
            "rng_seed": 11,
            "created_at": "2024-01-01T00:00:00Z"
        }),
    );
    let events = dir.join("recorded_events.jsonl");
    run_ok(&[
        "generate-events",
        "--config",
        p(&config),
        "--out",
        p(&events),
        "--report",
        p(&dir.join("r1.json")),
    ]);
    run_ok(&[
        "generate-inferences",
        "--config",
        p(&config),
        "--events",
        p(&events),
        "--out",
        p(&dir.join("recorded_corpus.jsonl")),
        "--report",
        p(&dir.join("r2.json")),
    ]);
}

/// Replays the full pipeline from fixtures and returns every output file.
pub fn replay(dir: &Path, fixture_dir: &Path, scorer_url: &str) -> BTreeMap<String, Vec<u8>> {
    std::fs::create_dir_all(dir).unwrap();
    let config = dir.join("run.json");
    write_json(
        &config,
        &json!({
            "endpoint": {"fixture_dir": fixture_dir},
            "plan": plan(),
            "rng_seed": 11,
            "scorer": {"kind": "constant", "value": 0.6},
            "presets": {"critic_low": 0.3, "critic_high": 0.7}
        }),
    );
    let f = |name: &str| -> PathBuf { dir.join(name) };
    run_ok(&[
        "generate-events",
        "--config",
        p(&config),
        "--out",
        p(&f("events.jsonl")),
        "--report",
        p(&f("events_report.json")),
    ]);
    run_ok(&[
        "generate-inferences",
        "--config",
        p(&config),
        "--events",
        p(&f("events.jsonl")),
        "--out",
        p(&f("corpus.jsonl")),
        "--report",
        p(&f("inference_report.json")),
    ]);
    run_ok(&[
        "score",
        "--config",
        p(&config),
        "--corpus",
        p(&f("corpus.jsonl")),
        "--out",
        p(&f("constant_scores.jsonl")),
    ]);
    let binding = json!({"kind": "token_mean_nll_threshold", "url": scorer_url}).to_string();
    run_ok(&[
        "score",
        "--config",
        p(&config),
        "--corpus",
        p(&f("corpus.jsonl")),
        "--binding",
        &binding,
        "--out",
        p(&f("scores.jsonl")),
    ]);
    run_ok(&[
        "filter",
        "--corpus",
        p(&f("corpus.jsonl")),
        "--scores",
        p(&f("scores.jsonl")),
        "--cutoff",
        "critic_low",
        "--config",
        p(&config),
        "--out",
        p(&f("filtered.jsonl")),
    ]);
    run_ok(&[
        "analyze",
        "--corpus",
        p(&f("filtered.jsonl")),
        "--out",
        p(&f("analytics.json")),
    ]);
    run_ok(&[
        "export",
        "--corpus",
        p(&f("filtered.jsonl")),
        "--out",
        p(&f("train.txt")),
    ]);
    let mut outputs = BTreeMap::new();
    for name in [
        "events.jsonl",
        "events_report.json",
        "corpus.jsonl",
        "inference_report.json",
        "constant_scores.jsonl",
        "scores.jsonl",
        "filtered.jsonl",
        "analytics.json",
        "train.txt",
    ] {
        outputs.insert(name.to_string(), std::fs::read(f(name)).unwrap());
    }
    outputs
}
