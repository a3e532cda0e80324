//! Critic scoring, the acceptance gate, and critic evaluation against human
//! labels.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::path::Path;

use futures::stream::{self, StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};

use crate::client::{ScorerClient, TransportOptions};
use crate::corpus::{Corpus, KnowledgeTriple, Verdict};
use crate::error::{Error, Result};
use crate::jsonl;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticScore {
    pub triple_id: String,
    pub score: f64,
}

fn default_batch_size() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerBinding {
    Constant {
        value: f64,
    },
    RemoteHttp {
        url: String,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
    },
    NllThreshold {
        url: String,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
    },
    TokenMeanNllThreshold {
        url: String,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
    },
}

impl ScorerBinding {
    pub fn validate(&self) -> Result<()> {
        match self {
            ScorerBinding::Constant { value } => {
                if !(0.0..=1.0).contains(value) {
                    return Err(Error::Config(format!(
                        "constant score {value} is outside [0, 1]"
                    )));
                }
            }
            ScorerBinding::RemoteHttp { url, batch_size }
            | ScorerBinding::NllThreshold { url, batch_size }
            | ScorerBinding::TokenMeanNllThreshold { url, batch_size } => {
                if url.trim().is_empty() {
                    return Err(Error::Config("scorer binding needs a url".into()));
                }
                if *batch_size == 0 {
                    return Err(Error::Config("batch_size must be at least 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// Maps values to [0, 1] by ascending rank: the smallest value scores 1 and
/// the largest 0. Ties share their average rank.
pub fn rank_normalize_descending(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n == 1 {
        return vec![1.0];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks.iter().map(|r| 1.0 - r / (n - 1) as f64).collect()
}

/// One score per triple, in corpus order.
pub async fn score_corpus(
    corpus: &Corpus,
    binding: &ScorerBinding,
    options: &TransportOptions,
) -> Result<Vec<CriticScore>> {
    binding.validate()?;
    let entries = &corpus.entries;
    let values: Vec<f64> = match binding {
        ScorerBinding::Constant { value } => vec![*value; entries.len()],
        ScorerBinding::RemoteHttp { url, batch_size } => {
            let client = ScorerClient::new(url, options)?;
            let batches: Vec<Vec<f64>> = stream::iter(entries.chunks(*batch_size))
                .map(|chunk| {
                    let client = &client;
                    async move {
                        let scores = client.score_triples(chunk).await?;
                        if scores.len() != chunk.len() {
                            return Err(Error::MalformedResponse(format!(
                                "expected {} scores, got {}",
                                chunk.len(),
                                scores.len()
                            )));
                        }
                        Ok(scores)
                    }
                })
                .buffered(options.max_in_flight.max(1))
                .try_collect()
                .await?;
            let values: Vec<f64> = batches.into_iter().flatten().collect();
            for (t, &score) in entries.iter().zip(&values) {
                if !(0.0..=1.0).contains(&score) {
                    return Err(Error::ScoreOutOfRange {
                        triple_id: t.id.clone(),
                        score,
                    });
                }
            }
            values
        }
        ScorerBinding::NllThreshold { url, batch_size }
        | ScorerBinding::TokenMeanNllThreshold { url, batch_size } => {
            let client = ScorerClient::new(url, options)?;
            let texts: Vec<String> = entries.iter().map(KnowledgeTriple::render).collect();
            let batches: Vec<Vec<_>> = stream::iter(texts.chunks(*batch_size))
                .map(|chunk| {
                    let client = &client;
                    async move { client.score_nll_batch(chunk).await }
                })
                .buffered(options.max_in_flight.max(1))
                .try_collect()
                .await?;
            let token_mean = matches!(binding, ScorerBinding::TokenMeanNllThreshold { .. });
            let nll: Vec<f64> = batches
                .into_iter()
                .flatten()
                .map(|s| {
                    if token_mean {
                        s.token_mean()
                    } else {
                        s.total_nll
                    }
                })
                .collect();
            rank_normalize_descending(&nll)
        }
    };
    Ok(entries
        .iter()
        .zip(values)
        .map(|(t, score)| CriticScore {
            triple_id: t.id.clone(),
            score,
        })
        .collect())
}

pub fn load_scores(path: &Path) -> Result<Vec<CriticScore>> {
    let rows: Vec<(usize, CriticScore)> = jsonl::read_numbered(path)?;
    for (line, s) in &rows {
        if !(0.0..=1.0).contains(&s.score) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: *line,
                message: format!("score {} is outside [0, 1]", s.score),
            });
        }
    }
    Ok(rows.into_iter().map(|(_, s)| s).collect())
}

pub fn save_scores(scores: &[CriticScore], path: &Path) -> Result<()> {
    jsonl::write(path, scores)
}

fn score_map(scores: &[CriticScore]) -> HashMap<&str, f64> {
    scores
        .iter()
        .map(|s| (s.triple_id.as_str(), s.score))
        .collect()
}

/// Keeps triples with score >= `t`, in order, annotated with their score.
pub fn filter_at_threshold(corpus: &Corpus, scores: &[CriticScore], t: f64) -> Result<Corpus> {
    let map = score_map(scores);
    let mut kept = Vec::new();
    for triple in &corpus.entries {
        let score = *map
            .get(triple.id.as_str())
            .ok_or_else(|| Error::MissingScore(triple.id.clone()))?;
        if score >= t {
            let mut triple = triple.clone();
            triple.critic_score = Some(score);
            kept.push(triple);
        }
    }
    Ok(Corpus::new(kept))
}

/// A scored item with a binary human judgement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredLabel {
    pub triple_id: String,
    pub score: f64,
    pub accept: bool,
}

/// Joins scores with verdicts, dropping no-judgement items.
pub fn join_labels(
    scores: &[CriticScore],
    labels: &[(String, Verdict)],
) -> Result<Vec<ScoredLabel>> {
    let map = score_map(scores);
    labels
        .iter()
        .filter(|(_, v)| *v != Verdict::NoJudgement)
        .map(|(id, v)| {
            let score = *map
                .get(id.as_str())
                .ok_or_else(|| Error::MissingScore(id.clone()))?;
            Ok(ScoredLabel {
                triple_id: id.clone(),
                score,
                accept: *v == Verdict::Accept,
            })
        })
        .collect()
}

fn check_labels(items: &[ScoredLabel]) -> Result<usize> {
    let positives = items.iter().filter(|i| i.accept).count();
    if positives == 0 || positives == items.len() {
        return Err(Error::DegenerateLabelSet);
    }
    Ok(positives)
}

/// Descending score, ties by ascending triple id.
fn ranked(items: &[ScoredLabel]) -> Vec<&ScoredLabel> {
    let mut out: Vec<&ScoredLabel> = items.iter().collect();
    out.sort_by(|a, b| match b.score.total_cmp(&a.score) {
        Ordering::Equal => a.triple_id.cmp(&b.triple_id),
        other => other,
    });
    out
}

/// Step-sum average precision over the ranking.
pub fn average_precision(items: &[ScoredLabel]) -> Result<f64> {
    let positives = check_labels(items)? as f64;
    let mut hits = 0.0;
    let mut sum = 0.0;
    for (k, item) in ranked(items).into_iter().enumerate() {
        if item.accept {
            hits += 1.0;
            sum += hits / (k + 1) as f64;
        }
    }
    Ok(sum / positives)
}

/// Best recall among score thresholds whose precision reaches the target.
/// Tied scores form a single operating point.
pub fn recall_at_precision(items: &[ScoredLabel], target_precision: f64) -> Result<f64> {
    let positives = check_labels(items)? as f64;
    let order = ranked(items);
    let mut best: f64 = 0.0;
    let mut hits = 0usize;
    for (k, item) in order.iter().enumerate() {
        if item.accept {
            hits += 1;
        }
        let last_of_group = order.get(k + 1).is_none_or(|next| next.score != item.score);
        if last_of_group {
            let precision = hits as f64 / (k + 1) as f64;
            if precision >= target_precision {
                best = best.max(hits as f64 / positives);
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub kept_fraction: f64,
    pub precision: f64,
    pub kept_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionCurve {
    pub points: Vec<CurvePoint>,
}

pub const DEFAULT_GRID: [f64; 10] = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1];

/// Precision of the top ceil(f * n) items for each kept fraction f.
pub fn precision_curve(items: &[ScoredLabel], grid: &[f64]) -> Result<PrecisionCurve> {
    check_labels(items)?;
    let order = ranked(items);
    let n = order.len();
    let mut fractions = grid.to_vec();
    for &f in &fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "kept fraction {f} is outside (0, 1]"
            )));
        }
    }
    fractions.sort_by(|a, b| b.total_cmp(a));
    let points = fractions
        .into_iter()
        .map(|f| {
            let kept_count = ((f * n as f64).ceil() as usize).clamp(1, n);
            let hits = order[..kept_count].iter().filter(|i| i.accept).count();
            CurvePoint {
                threshold: order[kept_count - 1].score,
                kept_fraction: f,
                precision: hits as f64 / kept_count as f64,
                kept_count,
            }
        })
        .collect();
    Ok(PrecisionCurve { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticEvaluation {
    pub n_items: usize,
    pub n_positive: usize,
    pub average_precision: f64,
    pub target_precision: f64,
    pub recall_at_precision: f64,
    pub precision_curve: PrecisionCurve,
}

pub fn evaluate_critic(
    items: &[ScoredLabel],
    target_precision: f64,
    grid: &[f64],
) -> Result<CriticEvaluation> {
    Ok(CriticEvaluation {
        n_items: items.len(),
        n_positive: check_labels(items)?,
        average_precision: average_precision(items)?,
        target_precision,
        recall_at_precision: recall_at_precision(items, target_precision)?,
        precision_curve: precision_curve(items, grid)?,
    })
}

/// Named cutoffs tuned to keep a target fraction of a reference score set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffPresets {
    pub critic_low: f64,
    pub critic_high: f64,
}

pub const CRITIC_LOW_KEPT: f64 = 0.68;
pub const CRITIC_HIGH_KEPT: f64 = 0.38;

/// The score of the item at rank ceil(f * n), so that at least that many
/// items pass `score >= t`.
pub fn cutoff_for_kept_fraction(scores: &[f64], fraction: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "kept fraction {fraction} is outside (0, 1]"
        )));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = ((fraction * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[k - 1])
}

impl CutoffPresets {
    pub fn tune(dev_scores: &[f64]) -> Result<Self> {
        Ok(CutoffPresets {
            critic_low: cutoff_for_kept_fraction(dev_scores, CRITIC_LOW_KEPT)?,
            critic_high: cutoff_for_kept_fraction(dev_scores, CRITIC_HIGH_KEPT)?,
        })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "critic_low" => Some(self.critic_low),
            "critic_high" => Some(self.critic_high),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub name: String,
    pub threshold: f64,
}

/// Parses `0.5`, `critic_low` or `name=0.5`.
pub fn parse_cutoff(spec: &str, presets: Option<&CutoffPresets>) -> Result<Cutoff> {
    let spec = spec.trim();
    if let Some((name, value)) = spec.split_once('=') {
        let threshold = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad cutoff value in {spec:?}")))?;
        return Ok(Cutoff {
            name: name.trim().to_string(),
            threshold,
        });
    }
    if let Ok(threshold) = spec.parse::<f64>() {
        return Ok(Cutoff {
            name: spec.to_string(),
            threshold,
        });
    }
    let threshold = presets
        .and_then(|p| p.get(spec))
        .ok_or_else(|| Error::Config(format!("unknown cutoff {spec:?}")))?;
    Ok(Cutoff {
        name: spec.to_string(),
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cutoff: String,
    pub threshold: f64,
    pub size: usize,
    pub kept_fraction: f64,
    pub holdout_kept: usize,
    /// Accept rate among kept holdout items; absent when none are kept.
    pub holdout_precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub corpus_size: usize,
    pub holdout_size: usize,
    pub holdout_base_rate: f64,
    pub rows: Vec<SweepRow>,
}

/// Fails with `Contamination` when any holdout id is also a training id.
pub fn check_disjoint(holdout: &[ScoredLabel], training_ids: &HashSet<String>) -> Result<()> {
    let overlap: Vec<&str> = holdout
        .iter()
        .map(|h| h.triple_id.as_str())
        .filter(|id| training_ids.contains(*id))
        .collect();
    match overlap.first() {
        None => Ok(()),
        Some(first) => Err(Error::Contamination {
            count: overlap.len(),
            first: first.to_string(),
        }),
    }
}

/// Corpus size and holdout precision at each cutoff, rows sorted by
/// ascending threshold.
pub fn sweep_report(
    corpus: &Corpus,
    scores: &[CriticScore],
    holdout: &[ScoredLabel],
    cutoffs: &[Cutoff],
    training_ids: &HashSet<String>,
) -> Result<SweepReport> {
    check_disjoint(holdout, training_ids)?;
    if holdout.is_empty() {
        return Err(Error::NoLabels);
    }
    let map = score_map(scores);
    let corpus_scores = corpus
        .entries
        .iter()
        .map(|t| {
            map.get(t.id.as_str())
                .copied()
                .ok_or_else(|| Error::MissingScore(t.id.clone()))
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = corpus_scores.len();
    let mut sorted_cutoffs = cutoffs.to_vec();
    sorted_cutoffs.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));
    let rows = sorted_cutoffs
        .into_iter()
        .map(|c| {
            let size = corpus_scores.iter().filter(|&&s| s >= c.threshold).count();
            let kept: Vec<&ScoredLabel> =
                holdout.iter().filter(|h| h.score >= c.threshold).collect();
            let hits = kept.iter().filter(|h| h.accept).count();
            SweepRow {
                cutoff: c.name,
                threshold: c.threshold,
                size,
                kept_fraction: if n == 0 { 0.0 } else { size as f64 / n as f64 },
                holdout_kept: kept.len(),
                holdout_precision: (!kept.is_empty()).then(|| hits as f64 / kept.len() as f64),
            }
        })
        .collect();
    let positives = holdout.iter().filter(|h| h.accept).count();
    Ok(SweepReport {
        corpus_size: n,
        holdout_size: holdout.len(),
        holdout_base_rate: positives as f64 / holdout.len() as f64,
        rows,
    })
}
