//! Knowledge triples, corpora and their on-disk JSONL form.

mod labels;
mod text;

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::jsonl;

pub use labels::{
    aggregate_label_groups, aggregate_labels, split_labeled, HumanLabel, LabeledTriple, RawOption,
    Split, Verdict,
};
pub use text::{is_degenerate, normalize_text, tokenize, MARKER_X, MARKER_Y, MIN_TAIL_CHARS};

/// The seven causal relation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    XAttr,
    XReact,
    XEffect,
    XIntent,
    XWant,
    XNeed,
    HinderedBy,
}

impl Relation {
    pub const ALL: [Relation; 7] = [
        Relation::XAttr,
        Relation::XReact,
        Relation::XEffect,
        Relation::XIntent,
        Relation::XWant,
        Relation::XNeed,
        Relation::HinderedBy,
    ];

    /// Canonical lowercase name used in files.
    pub fn name(self) -> &'static str {
        match self {
            Relation::XAttr => "xattr",
            Relation::XReact => "xreact",
            Relation::XEffect => "xeffect",
            Relation::XIntent => "xintent",
            Relation::XWant => "xwant",
            Relation::XNeed => "xneed",
            Relation::HinderedBy => "hinderedby",
        }
    }

    /// Conventional mixed-case spelling, e.g. `xAttr`.
    pub fn label(self) -> &'static str {
        match self {
            Relation::XAttr => "xAttr",
            Relation::XReact => "xReact",
            Relation::XEffect => "xEffect",
            Relation::XIntent => "xIntent",
            Relation::XWant => "xWant",
            Relation::XNeed => "xNeed",
            Relation::HinderedBy => "HinderedBy",
        }
    }

    /// Natural-language gloss used in reports and exported training lines.
    pub fn display_template(self) -> &'static str {
        match self {
            Relation::XAttr => "how X is perceived after event",
            Relation::XReact => "how X reacts in response to event",
            Relation::XEffect => "what X does after event",
            Relation::XIntent => "X's intent in event",
            Relation::XWant => "what X wants after event",
            Relation::XNeed => "what X needed for event to take place",
            Relation::HinderedBy => "what can hinder event",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Relation::ALL
            .into_iter()
            .find(|r| r.name() == lower)
            .ok_or_else(|| Error::UnknownRelation(s.to_string()))
    }
}

impl Serialize for Relation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Relation {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A generic situation mentioning `PersonX` (and possibly `PersonY`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Event(String);

impl Event {
    pub fn new(raw: &str) -> Result<Self> {
        let text = normalize_text(raw);
        if text.is_empty() {
            return Err(Error::InvalidEvent {
                text,
                reason: "empty",
            });
        }
        if !text.contains(MARKER_X) {
            return Err(Error::InvalidEvent {
                text,
                reason: "missing PersonX",
            });
        }
        Ok(Event(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Event {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Event::new(&value)
    }
}

impl From<Event> for String {
    fn from(e: Event) -> String {
        e.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_model: String,
    pub generation_config_hash: String,
    pub created_at: DateTime<Utc>,
}

/// Content hash over the lowercased normalized `event \t relation \t tail`.
pub fn triple_id(event: &Event, relation: Relation, tail: &str) -> String {
    let key = format!(
        "{}\t{}\t{}",
        event.as_str().to_lowercase(),
        relation.name(),
        normalize_text(tail).to_lowercase()
    );
    hex::encode(Sha256::digest(key.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeTriple {
    pub id: String,
    pub event: Event,
    pub relation: Relation,
    pub tail: String,
    #[serde(flatten)]
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critic_score: Option<f64>,
}

impl KnowledgeTriple {
    pub fn new(event: Event, relation: Relation, tail: &str, provenance: Provenance) -> Self {
        let tail = normalize_text(tail);
        KnowledgeTriple {
            id: triple_id(&event, relation, &tail),
            event,
            relation,
            tail,
            provenance,
            critic_score: None,
        }
    }

    /// Text form shared by export, NLL scoring and entropy estimation.
    pub fn render(&self) -> String {
        format!(
            "{} {} [GEN] {}",
            self.event,
            self.relation.display_template(),
            self.tail
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub entries: Vec<KnowledgeTriple>,
    pub source_path: Option<PathBuf>,
}

impl Corpus {
    pub fn new(entries: Vec<KnowledgeTriple>) -> Self {
        Corpus {
            entries,
            source_path: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, KnowledgeTriple> {
        self.entries.iter()
    }
}

/// Keeps the first occurrence of each content key, preserving order.
pub fn dedup(corpus: &Corpus) -> Corpus {
    let mut seen = HashSet::new();
    let entries = corpus
        .entries
        .iter()
        .filter(|t| seen.insert(t.id.clone()))
        .cloned()
        .collect();
    Corpus {
        entries,
        source_path: corpus.source_path.clone(),
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let rows: Vec<(usize, KnowledgeTriple)> = jsonl::read_numbered(path)?;
    let mut entries = Vec::with_capacity(rows.len());
    for (line, t) in rows {
        if t.id != triple_id(&t.event, t.relation, &t.tail) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("id {} does not match triple content", t.id),
            });
        }
        entries.push(t);
    }
    Ok(Corpus {
        entries,
        source_path: Some(path.to_path_buf()),
    })
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    jsonl::write(path, &corpus.entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn prov() -> Provenance {
        Provenance {
            source_model: "test".into(),
            generation_config_hash: "abc".into(),
            created_at: DateTime::parse_from_rfc3339("2021-01-01T00:00:00Z")
                .unwrap()
                .with_timezone(&Utc),
        }
    }

    fn triple(event: &str, rel: Relation, tail: &str) -> KnowledgeTriple {
        KnowledgeTriple::new(Event::new(event).unwrap(), rel, tail, prov())
    }

    #[test]
    fn relation_names_round_trip() {
        for r in Relation::ALL {
            assert_eq!(r.name().parse::<Relation>().unwrap(), r);
            assert_eq!(r.label().parse::<Relation>().unwrap(), r);
            assert!(!r.display_template().is_empty());
            let json = serde_json::to_string(&r).unwrap();
            assert_eq!(json, format!("\"{}\"", r.name()));
        }
        assert_eq!(Relation::ALL.len(), 7);
        let err = "xFoo".parse::<Relation>().unwrap_err();
        assert!(err.to_string().contains("xFoo"));
    }

    #[test]
    fn event_invariants() {
        assert_eq!(
            Event::new("  PersonX   runs ").unwrap().as_str(),
            "PersonX runs"
        );
        assert!(Event::new("   ").is_err());
        assert!(Event::new("Someone runs").is_err());
    }

    #[test]
    fn id_is_deterministic() {
        let a = triple("PersonX runs", Relation::XAttr, "fast");
        let b = triple("PersonX  runs", Relation::XAttr, " fast ");
        let c = triple("PersonX runs", Relation::XReact, "fast");
        assert_eq!(a.id, b.id);
        assert_ne!(a.id, c.id);
        assert_eq!(a.id.len(), 64);
    }

    #[test]
    fn dedup_keeps_first_seen_order() {
        let t1 = triple("PersonX runs", Relation::XAttr, "fast");
        let t2 = triple("PersonX runs", Relation::XAttr, "tired");
        let c = Corpus::new(vec![t1.clone(), t1.clone(), t2.clone()]);
        assert_eq!(dedup(&c).entries, vec![t1, t2]);
        assert!(dedup(&Corpus::default()).is_empty());
    }

    #[test]
    fn dedup_matches_set_oracle() {
        let keys = ["a one", "b two", "c three"];
        let picks = [1, 0, 1, 2, 0, 0, 2, 1, 2, 0];
        let entries: Vec<_> = picks
            .iter()
            .map(|&i| triple("PersonX waits", Relation::XWant, keys[i]))
            .collect();
        let out = dedup(&Corpus::new(entries.clone()));
        // oracle: linear scan with an explicit list of seen tails
        let mut seen: Vec<&str> = Vec::new();
        for t in &entries {
            if !seen.contains(&t.tail.as_str()) {
                seen.push(&t.tail);
            }
        }
        let got: Vec<&str> = out.iter().map(|t| t.tail.as_str()).collect();
        assert_eq!(got, seen);
        assert_eq!(got, vec!["b two", "a one", "c three"]);
    }

    #[test]
    fn render_format() {
        let t = triple(
            "PersonX goes jogging",
            Relation::XNeed,
            "wear running shoes",
        );
        assert_eq!(
            t.render(),
            "PersonX goes jogging what X needed for event to take place [GEN] wear running shoes"
        );
    }
}
