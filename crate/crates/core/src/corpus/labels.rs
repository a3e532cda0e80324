//! Human acceptability labels, their aggregation and dataset splits.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, KnowledgeTriple};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawOption {
    AlwaysOften,
    SometimesLikely,
    FarfetchedNever,
    Invalid,
    TooUnfamiliar,
}

impl RawOption {
    pub const ALL: [RawOption; 5] = [
        RawOption::AlwaysOften,
        RawOption::SometimesLikely,
        RawOption::FarfetchedNever,
        RawOption::Invalid,
        RawOption::TooUnfamiliar,
    ];

    pub fn verdict(self) -> Verdict {
        match self {
            RawOption::AlwaysOften | RawOption::SometimesLikely => Verdict::Accept,
            RawOption::FarfetchedNever | RawOption::Invalid => Verdict::Reject,
            RawOption::TooUnfamiliar => Verdict::NoJudgement,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
    NoJudgement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanLabel {
    pub triple_id: String,
    pub annotator_id: String,
    pub raw_option: RawOption,
}

impl HumanLabel {
    pub fn mapped_verdict(&self) -> Verdict {
        self.raw_option.verdict()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTriple {
    #[serde(flatten)]
    pub triple: KnowledgeTriple,
    pub verdict: Verdict,
    pub n_annotators: usize,
}

/// Any no-judgement vote wins; otherwise strict majority accept, with ties
/// going to reject.
pub fn aggregate_labels(labels: &[HumanLabel]) -> Result<Verdict> {
    let first = labels.first().ok_or(Error::NoLabels)?;
    if let Some(other) = labels.iter().find(|l| l.triple_id != first.triple_id) {
        return Err(Error::InconsistentLabelGroup {
            expected: first.triple_id.clone(),
            found: other.triple_id.clone(),
        });
    }
    let mut accept = 0usize;
    let mut reject = 0usize;
    for label in labels {
        match label.mapped_verdict() {
            Verdict::NoJudgement => return Ok(Verdict::NoJudgement),
            Verdict::Accept => accept += 1,
            Verdict::Reject => reject += 1,
        }
    }
    Ok(if accept > reject {
        Verdict::Accept
    } else {
        Verdict::Reject
    })
}

/// Groups a label file by triple id (first-seen order) and joins each group
/// against `corpus`.
pub fn aggregate_label_groups(
    labels: &[HumanLabel],
    corpus: &Corpus,
) -> Result<Vec<LabeledTriple>> {
    let by_id: HashMap<&str, &KnowledgeTriple> =
        corpus.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<HumanLabel>> = HashMap::new();
    for label in labels {
        let id = label.triple_id.as_str();
        groups
            .entry(id)
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push(label.clone());
    }
    order
        .into_iter()
        .map(|id| {
            let group = &groups[id];
            let triple = by_id.get(id).ok_or_else(|| {
                Error::InvalidInput(format!("label refers to unknown triple id {id}"))
            })?;
            Ok(LabeledTriple {
                triple: (*triple).clone(),
                verdict: aggregate_labels(group)?,
                n_annotators: group.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded 80/10/10 split: sizes floor(0.8n), floor(0.1n), remainder.
pub fn split_labeled<T: Clone>(items: &[T], seed: u64) -> Result<Split<T>> {
    let n = items.len();
    if n < 10 {
        return Err(Error::TooFewLabels(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * 8 / 10;
    let n_dev = n / 10;
    let pick = |range: &[usize]| range.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok(Split {
        train: pick(&order[..n_train]),
        dev: pick(&order[n_train..n_train + n_dev]),
        test: pick(&order[n_train + n_dev..]),
    })
}
