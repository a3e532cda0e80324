//! Few-shot prompt rendering and completion parsing.

mod names;
mod parse;
mod template;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Event, Relation};
use crate::error::{Error, Result};

pub use names::{restore_markers, substitute_names, NameAssignment, NamePool};
pub use parse::parse_event_completion;
pub use template::{FewShotExample, PromptTemplate, TemplateSet};

const BUILTIN_SEEDS: &str = include_str!("../../templates/seed_events.txt");

/// Curated events that few-shot event prompts are sampled from.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedPool {
    events: Vec<Event>,
}

impl SeedPool {
    pub fn new(events: Vec<Event>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &events {
            if !seen.insert(e) {
                return Err(Error::InvalidInput(format!(
                    "duplicate seed event {:?}",
                    e.as_str()
                )));
            }
        }
        Ok(SeedPool { events })
    }

    /// One event per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let events = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(Event::new)
            .collect::<Result<Vec<_>>>()?;
        SeedPool::new(events)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SeedPool::parse(&text)
    }

    pub fn builtin() -> Self {
        SeedPool::parse(BUILTIN_SEEDS).expect("builtin seed pool")
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// `k` distinct events drawn uniformly without replacement, in random order.
pub fn sample_seed_events(pool: &SeedPool, k: usize, rng_seed: u64) -> Result<Vec<Event>> {
    if k > pool.len() {
        return Err(Error::InvalidInput(format!(
            "cannot sample {k} seed events from a pool of {}",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(rand::seq::index::sample(&mut rng, pool.len(), k)
        .into_iter()
        .map(|i| pool.events[i].clone())
        .collect())
}

/// Parses the continuation of a relation prompt's open slot into a tail
/// (still carrying the prompt's natural names).
pub fn parse_inference_completion(
    templates: &TemplateSet,
    relation: Relation,
    raw: &str,
) -> Result<String> {
    templates.relation(relation)?.parse_completion(raw)
}
