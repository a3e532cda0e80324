//! Event generation to a unique-count target, then inference generation over
//! events x relations with normalization, degeneracy filtering and dedup.

use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, Utc};
use futures::stream::{self, StreamExt};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::client::{GenerationConfig, LlmClient};
use crate::corpus::{
    is_degenerate, normalize_text, Corpus, Event, KnowledgeTriple, Provenance, Relation,
};
use crate::error::{Error, Result};
use crate::prompt::{
    parse_event_completion, restore_markers, sample_seed_events, FewShotExample, NameAssignment,
    NamePool, SeedPool, TemplateSet,
};

/// How few-shot examples are chosen for each inference prompt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FewShotMode {
    /// The template's examples in file order.
    #[default]
    Fixed,
    /// A seeded per-input draw (and order) from the template's examples.
    Resampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationPlan {
    pub target_event_count: usize,
    pub relations: Vec<Relation>,
    pub inferences_per_input: u32,
    pub event_config: GenerationConfig,
    pub inference_config: GenerationConfig,
    pub rng_seed: u64,
    pub prompts_per_event_batch: usize,
    pub max_event_batches: usize,
    pub few_shot: FewShotMode,
    pub names: NamePool,
    /// Upper bound on (event, relation) inputs awaiting the client at once.
    pub max_pending_inputs: usize,
}

impl Default for GenerationPlan {
    fn default() -> Self {
        GenerationPlan {
            target_event_count: 100,
            relations: Relation::ALL.to_vec(),
            inferences_per_input: 10,
            event_config: GenerationConfig {
                model: "davinci".into(),
                stop: vec!["\n\n\n".into()],
                max_tokens: 128,
                ..GenerationConfig::default()
            },
            inference_config: GenerationConfig {
                stop: vec!["\n".into()],
                ..GenerationConfig::default()
            },
            rng_seed: 0,
            prompts_per_event_batch: 5,
            max_event_batches: 1000,
            few_shot: FewShotMode::Fixed,
            names: NamePool::default(),
            max_pending_inputs: 64,
        }
    }
}

impl GenerationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.inferences_per_input == 0 {
            return Err(Error::Config(
                "inferences_per_input must be at least 1".into(),
            ));
        }
        if self.relations.is_empty() {
            return Err(Error::Config("plan needs at least one relation".into()));
        }
        let unique: HashSet<_> = self.relations.iter().collect();
        if unique.len() != self.relations.len() {
            return Err(Error::Config("plan lists a relation twice".into()));
        }
        if self.prompts_per_event_batch == 0 || self.max_pending_inputs == 0 {
            return Err(Error::Config("batch sizes must be at least 1".into()));
        }
        self.event_config.validate()?;
        self.inference_config.validate()
    }
}

/// Stable 64-bit seed derived from the run seed and a path of integers.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for p in path {
        hasher.update(p.to_le_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// The stand-in names used for `event` under this plan.
pub fn names_for(plan: &GenerationPlan, event: &Event) -> Result<NameAssignment> {
    let key = hex::encode(Sha256::digest(event.as_str().as_bytes()));
    plan.names.assign(&key, plan.rng_seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedEvent {
    pub event: Event,
    #[serde(flatten)]
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventRunReport {
    pub target: usize,
    pub collected: usize,
    pub batches: usize,
    pub api_calls: usize,
    pub completions: usize,
    pub candidates: usize,
    pub duplicate_dropped: usize,
    pub surplus_dropped: usize,
    pub http_requests: u64,
    pub retries: u64,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

/// Samples fresh seed events for every prompt, collecting unique events
/// until the target is met or the batch cap is hit.
pub async fn generate_events(
    plan: &GenerationPlan,
    pool: &SeedPool,
    templates: &TemplateSet,
    client: &LlmClient,
    created_at: DateTime<Utc>,
) -> Result<(Vec<GeneratedEvent>, EventRunReport)> {
    plan.validate()?;
    let before = client.stats();
    let mut report = EventRunReport {
        target: plan.target_event_count,
        ..Default::default()
    };
    let provenance = Provenance {
        source_model: plan.event_config.model.clone(),
        generation_config_hash: plan.event_config.config_hash(),
        created_at,
    };
    let mut seen = HashSet::new();
    let mut events = Vec::new();
    let k = templates.event.n_examples;

    while events.len() < plan.target_event_count && report.batches < plan.max_event_batches {
        let batch = report.batches as u64;
        let prompts = (0..plan.prompts_per_event_batch as u64)
            .map(|j| {
                let seeds = sample_seed_events(pool, k, derive_seed(plan.rng_seed, &[batch, j]))?;
                templates.event.render_event_prompt(&seeds)
            })
            .collect::<Result<Vec<_>>>()?;
        let responses = futures::future::join_all(
            prompts
                .iter()
                .map(|p| client.complete(p, &plan.event_config)),
        )
        .await;
        report.batches += 1;
        report.api_calls += prompts.len();
        for response in responses {
            for completion in response? {
                report.completions += 1;
                for text in parse_event_completion(&completion.text) {
                    report.candidates += 1;
                    let event = Event::new(&text)?;
                    if !seen.insert(event.clone()) {
                        report.duplicate_dropped += 1;
                    } else if events.len() >= plan.target_event_count {
                        report.surplus_dropped += 1;
                    } else {
                        events.push(GeneratedEvent {
                            event,
                            provenance: provenance.clone(),
                        });
                    }
                }
            }
        }
    }
    report.collected = events.len();
    if events.len() < plan.target_event_count {
        let warning = format!(
            "batch cap of {} reached with {} of {} unique events",
            plan.max_event_batches,
            events.len(),
            plan.target_event_count
        );
        log::warn!("{warning}");
        report.warnings.push(warning);
    }
    let after = client.stats();
    report.http_requests = after.http_requests - before.http_requests;
    report.retries = after.retries - before.retries;
    Ok((events, report))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationCounts {
    pub generated: usize,
    pub kept: usize,
    pub duplicate_dropped: usize,
    pub degenerate_dropped: usize,
    pub parse_failed: usize,
    pub input_failures: usize,
    pub api_calls: usize,
}

impl RelationCounts {
    fn add(&mut self, other: &RelationCounts) {
        self.generated += other.generated;
        self.kept += other.kept;
        self.duplicate_dropped += other.duplicate_dropped;
        self.degenerate_dropped += other.degenerate_dropped;
        self.parse_failed += other.parse_failed;
        self.input_failures += other.input_failures;
        self.api_calls += other.api_calls;
    }

    /// generated = kept + duplicate_dropped + degenerate_dropped + parse_failed
    pub fn balances(&self) -> bool {
        self.generated
            == self.kept + self.duplicate_dropped + self.degenerate_dropped + self.parse_failed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFailure {
    pub event: String,
    pub relation: Relation,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InferenceRunReport {
    pub events: usize,
    pub per_relation: BTreeMap<Relation, RelationCounts>,
    pub totals: RelationCounts,
    pub http_requests: u64,
    pub retries: u64,
    pub failures: Vec<InputFailure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

fn few_shot_for(
    plan: &GenerationPlan,
    pool: &[FewShotExample],
    n: usize,
    event: &Event,
    relation: Relation,
) -> Result<Vec<FewShotExample>> {
    if pool.len() < n {
        return Err(Error::Template(format!(
            "{relation} template has {} examples, needs {n}",
            pool.len()
        )));
    }
    Ok(match plan.few_shot {
        FewShotMode::Fixed => pool[..n].to_vec(),
        FewShotMode::Resampled => {
            let key = derive_seed(
                plan.rng_seed,
                &[u64::from_le_bytes(
                    Sha256::digest(format!("{}\t{}", event, relation).as_bytes())[..8]
                        .try_into()
                        .expect("8 bytes"),
                )],
            );
            sample(&mut ChaCha8Rng::seed_from_u64(key), pool.len(), n)
                .into_iter()
                .map(|i| pool[i].clone())
                .collect()
        }
    })
}

/// Requests `inferences_per_input` tails for every (event, relation) pair.
/// Failed inputs are recorded and skipped. Output order follows event order,
/// then plan relation order, then sample index.
pub async fn generate_inferences(
    events: &[Event],
    plan: &GenerationPlan,
    templates: &TemplateSet,
    client: &LlmClient,
    created_at: DateTime<Utc>,
) -> Result<(Corpus, InferenceRunReport)> {
    plan.validate()?;
    let before = client.stats();
    let config = plan.inference_config.with_n(plan.inferences_per_input);
    let provenance = Provenance {
        source_model: config.model.clone(),
        generation_config_hash: config.config_hash(),
        created_at,
    };

    // prompts are rendered up front so template errors abort before any call
    let mut jobs = Vec::with_capacity(events.len() * plan.relations.len());
    for event in events {
        let names = names_for(plan, event)?;
        for &relation in &plan.relations {
            let template = templates.relation(relation)?;
            let few_shot = few_shot_for(
                plan,
                &template.examples,
                template.n_examples,
                event,
                relation,
            )?;
            let prompt = template.render_inference_prompt(event, &few_shot, &names)?;
            jobs.push((event, relation, names.clone(), prompt));
        }
    }

    let responses: Vec<_> = stream::iter(jobs.iter())
        .map(|(_, _, _, prompt)| client.complete(prompt, &config))
        .buffered(plan.max_pending_inputs)
        .collect()
        .await;

    let mut report = InferenceRunReport {
        events: events.len(),
        per_relation: plan
            .relations
            .iter()
            .map(|r| (*r, RelationCounts::default()))
            .collect(),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for ((event, relation, names, _), response) in jobs.iter().zip(responses) {
        let counts = report
            .per_relation
            .get_mut(relation)
            .expect("relation in plan");
        counts.api_calls += 1;
        let completions = match response {
            Ok(c) => c,
            Err(e) => {
                counts.input_failures += 1;
                report.failures.push(InputFailure {
                    event: event.to_string(),
                    relation: *relation,
                    error: e.to_string(),
                });
                continue;
            }
        };
        let template = templates.relation(*relation)?;
        for completion in completions {
            counts.generated += 1;
            let tail = match template.parse_completion(&completion.text) {
                Ok(t) => normalize_text(&restore_markers(&t, names)),
                Err(_) => {
                    counts.parse_failed += 1;
                    continue;
                }
            };
            if is_degenerate(&tail) {
                counts.degenerate_dropped += 1;
                continue;
            }
            let triple =
                KnowledgeTriple::new((*event).clone(), *relation, &tail, provenance.clone());
            if seen.insert(triple.id.clone()) {
                counts.kept += 1;
                entries.push(triple);
            } else {
                counts.duplicate_dropped += 1;
            }
        }
    }
    let mut totals = RelationCounts::default();
    for counts in report.per_relation.values() {
        totals.add(counts);
    }
    report.totals = totals;
    let after = client.stats();
    report.http_requests = after.http_requests - before.http_requests;
    report.retries = after.retries - before.retries;
    Ok((Corpus::new(entries), report))
}
