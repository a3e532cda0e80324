//! Corpus measurements: lexical statistics, BLEU-2 soft uniqueness, and
//! model-based entropy, cross-entropy and KL estimates.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::client::ScorerClient;
use crate::corpus::{tokenize, Corpus, KnowledgeTriple, Relation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelationLexicalRow {
    pub count: usize,
    pub avg_tail_length_tokens: f64,
    pub unique_tokens: usize,
    pub unique_tails: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLexicalRow {
    pub unique_events: usize,
    pub avg_length_tokens: f64,
    pub unique_tokens: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LexicalStats {
    pub per_relation: BTreeMap<Relation, RelationLexicalRow>,
    pub events: EventLexicalRow,
}

pub fn lexical_stats(corpus: &Corpus) -> LexicalStats {
    #[derive(Default)]
    struct Acc<'a> {
        count: usize,
        tokens: usize,
        vocab: HashSet<String>,
        tails: HashSet<&'a str>,
    }
    let mut per_relation: BTreeMap<Relation, Acc> = BTreeMap::new();
    let mut events = HashSet::new();
    for t in &corpus.entries {
        let acc = per_relation.entry(t.relation).or_default();
        let tokens = tokenize(&t.tail);
        acc.count += 1;
        acc.tokens += tokens.len();
        acc.vocab.extend(tokens);
        acc.tails.insert(&t.tail);
        events.insert(t.event.as_str());
    }
    let mut event_tokens = 0;
    let mut event_vocab = HashSet::new();
    for e in &events {
        let tokens = tokenize(e);
        event_tokens += tokens.len();
        event_vocab.extend(tokens);
    }
    LexicalStats {
        per_relation: per_relation
            .into_iter()
            .map(|(r, acc)| {
                let row = RelationLexicalRow {
                    count: acc.count,
                    avg_tail_length_tokens: acc.tokens as f64 / acc.count as f64,
                    unique_tokens: acc.vocab.len(),
                    unique_tails: acc.tails.len(),
                };
                (r, row)
            })
            .collect(),
        events: EventLexicalRow {
            unique_events: events.len(),
            avg_length_tokens: if events.is_empty() {
                0.0
            } else {
                event_tokens as f64 / events.len() as f64
            },
            unique_tokens: event_vocab.len(),
        },
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    for gram in tokens.windows(n) {
        *out.entry(gram).or_insert(0) += 1;
    }
    out
}

/// Clipped n-gram precision of `candidate` against `references`.
fn modified_precision(candidate: &[String], references: &[Vec<String>], n: usize) -> f64 {
    let counts = ngram_counts(candidate, n);
    let total: usize = counts.values().sum();
    if total == 0 {
        return 0.0;
    }
    let mut max_ref: HashMap<&[String], usize> = HashMap::new();
    for r in references {
        for (gram, c) in ngram_counts(r, n) {
            let slot = max_ref.entry(gram).or_insert(0);
            *slot = (*slot).max(c);
        }
    }
    let clipped: usize = counts
        .iter()
        .map(|(gram, &c)| c.min(max_ref.get(gram).copied().unwrap_or(0)))
        .sum();
    clipped as f64 / total as f64
}

/// BLEU-2 over pre-tokenized text: geometric mean of clipped 1- and 2-gram
/// precisions times the brevity penalty against the closest reference
/// length. No smoothing. Candidates shorter than two tokens use the 1-gram
/// precision alone.
pub fn bleu2_tokens(candidate: &[String], references: &[Vec<String>]) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::EmptyReferences);
    }
    let c = candidate.len();
    if c == 0 {
        return Ok(0.0);
    }
    let r = references
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("nonempty");
    let bp = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    let p1 = modified_precision(candidate, references, 1);
    if c < 2 {
        return Ok(bp * p1);
    }
    let p2 = modified_precision(candidate, references, 2);
    Ok(bp * (p1 * p2).sqrt())
}

pub fn bleu2(candidate: &str, references: &[&str]) -> Result<f64> {
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    bleu2_tokens(&tokenize(candidate), &refs)
}

pub const SOFT_UNIQUE_BLEU: f64 = 0.5;

/// Greedily drops the member with the highest BLEU-2 against the rest
/// (lexicographically smallest on ties) until every member scores below
/// 0.5. Survivors keep their input order.
pub fn soft_unique_subset<S: AsRef<str>>(tails: &[S]) -> Vec<usize> {
    let tokens: Vec<Vec<String>> = tails.iter().map(|t| tokenize(t.as_ref())).collect();
    let mut alive: Vec<usize> = (0..tails.len()).collect();
    while alive.len() > 1 {
        let mut worst: Option<(usize, f64)> = None;
        for &i in &alive {
            let others: Vec<Vec<String>> = alive
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| tokens[j].clone())
                .collect();
            let b = bleu2_tokens(&tokens[i], &others).expect("others nonempty");
            if b < SOFT_UNIQUE_BLEU {
                continue;
            }
            worst = match worst {
                Some((w, wb)) if wb > b || (wb == b && tails[w].as_ref() <= tails[i].as_ref()) => {
                    Some((w, wb))
                }
                _ => Some((i, b)),
            };
        }
        match worst {
            None => break,
            Some((w, _)) => alive.retain(|&i| i != w),
        }
    }
    alive
}

/// Sum over (event, relation) groups of the soft-unique subset size.
pub fn softly_unique_size(corpus: &Corpus) -> usize {
    group_tails(corpus)
        .values()
        .map(|tails| soft_unique_subset(tails).len())
        .sum()
}

/// Soft-unique sizes per relation.
pub fn softly_unique_sizes(corpus: &Corpus) -> BTreeMap<Relation, usize> {
    let mut out = BTreeMap::new();
    for ((_, relation), tails) in group_tails(corpus) {
        *out.entry(relation).or_insert(0) += soft_unique_subset(&tails).len();
    }
    out
}

fn group_tails(corpus: &Corpus) -> HashMap<(&str, Relation), Vec<&str>> {
    let mut groups: HashMap<(&str, Relation), Vec<&str>> = HashMap::new();
    for t in &corpus.entries {
        groups
            .entry((t.event.as_str(), t.relation))
            .or_default()
            .push(&t.tail);
    }
    groups
}

/// Mean of per-example NLLs (nats) in bits.
pub fn entropy_bits(nll_nats: &[f64]) -> Result<f64> {
    if nll_nats.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(nll_nats.iter().sum::<f64>() / nll_nats.len() as f64 / LN_2)
}

/// Scores every rendered triple with `scorer` and returns bits per example.
pub async fn estimate_entropy(sample: &[KnowledgeTriple], scorer: &ScorerClient) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let texts: Vec<String> = sample.iter().map(KnowledgeTriple::render).collect();
    let mut nll = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(64) {
        nll.extend(
            scorer
                .score_nll_batch(chunk)
                .await?
                .iter()
                .map(|s| s.total_nll),
        );
    }
    entropy_bits(&nll)
}

pub fn kl_divergence(h_self: f64, h_cross: f64) -> f64 {
    let kl = h_cross - h_self;
    if kl < 0.0 {
        log::warn!("negative KL estimate {kl:.4} bits (finite-sample noise)");
    }
    kl
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub unit: String,
    pub h_self: f64,
    pub h_cross: f64,
    pub kl: f64,
    pub sample_size: usize,
    pub self_scorer: String,
    pub cross_scorer: String,
}

/// Entropy of the sample under its own model and cross-entropy under a
/// second model, on the same rendered texts.
pub async fn entropy_report(
    sample: &[KnowledgeTriple],
    self_scorer: &ScorerClient,
    cross_scorer: &ScorerClient,
) -> Result<EntropyReport> {
    let h_self = estimate_entropy(sample, self_scorer).await?;
    let h_cross = estimate_entropy(sample, cross_scorer).await?;
    Ok(EntropyReport {
        unit: "bits_per_example".into(),
        h_self,
        h_cross,
        kl: kl_divergence(h_self, h_cross),
        sample_size: sample.len(),
        self_scorer: self_scorer.url().to_string(),
        cross_scorer: cross_scorer.url().to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsReport {
    pub size: usize,
    pub size_div: usize,
    pub size_div_per_relation: BTreeMap<Relation, usize>,
    pub lexical: LexicalStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy: Option<EntropyReport>,
}

pub fn analyze(corpus: &Corpus) -> AnalyticsReport {
    let size_div_per_relation = softly_unique_sizes(corpus);
    AnalyticsReport {
        size: corpus.len(),
        size_div: size_div_per_relation.values().sum(),
        size_div_per_relation,
        lexical: lexical_stats(corpus),
        entropy: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bleu_examples() {
        assert!((bleu2("a b c", &["a b d"]).unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(bleu2("x y", &["x y"]).unwrap(), 1.0);
        assert_eq!(bleu2("x", &["x"]).unwrap(), 1.0);
        assert_eq!(bleu2("a b", &["c d"]).unwrap(), 0.0);
        assert!(matches!(bleu2("a", &[]), Err(Error::EmptyReferences)));
    }

    #[test]
    fn brevity_penalty_uses_closest_reference() {
        // c = 2, references of length 3 and 5: r = 3
        let b = bleu2("a b", &["a b c", "a b c d e"]).unwrap();
        assert!((b - (1.0f64 - 1.5).exp()).abs() < 1e-12);
    }

    #[test]
    fn clipping() {
        // "the the" against "the cat": p1 = 1/2, p2 = 0
        assert_eq!(bleu2("the the", &["the cat"]).unwrap(), 0.0);
        assert!(
            (modified_precision(&tokenize("the the"), &[tokenize("the cat")], 1) - 0.5).abs()
                < 1e-12
        );
    }

    #[test]
    fn soft_unique_basics() {
        assert_eq!(soft_unique_subset(&["x y z"]), vec![0]);
        assert_eq!(soft_unique_subset(&["tired", "tired"]).len(), 1);
        assert_eq!(
            soft_unique_subset(&["tired", "happy", "proud"]),
            vec![0, 1, 2]
        );
        let empty: [&str; 0] = [];
        assert!(soft_unique_subset(&empty).is_empty());
    }

    #[test]
    fn soft_unique_tie_removes_smaller_string() {
        // symmetric pair scoring sqrt(1/2); the smaller string goes first
        let kept = soft_unique_subset(&["a b c e", "a b c d"]);
        assert_eq!(kept, vec![0]);
    }

    #[test]
    fn entropy_units() {
        assert!((entropy_bits(&[LN_2, LN_2]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(entropy_bits(&[]), Err(Error::EmptySample)));
    }

    #[test]
    fn kl_identity() {
        assert!((kl_divergence(1.27, 9.31) - 8.04).abs() < 0.01);
        assert!((kl_divergence(7.80, 41.48) - 33.68).abs() < 0.01);
        assert_eq!(kl_divergence(2.5, 2.5), 0.0);
    }
}
