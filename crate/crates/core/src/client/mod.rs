//! Client for OpenAI-compatible `/v1/completions` endpoints and for the
//! NLL / critic scoring service.

mod transport;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::Ordering;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::KnowledgeTriple;
use crate::error::{Error, Result};
use crate::jsonl;

use transport::Transport;
pub use transport::{RetryPolicy, TransportOptions};

/// Sampling parameters for one completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub model: String,
    pub top_p: f64,
    pub presence_penalty: f64,
    pub frequency_penalty: f64,
    pub max_tokens: u32,
    pub n: u32,
    pub stop: Vec<String>,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<u32>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            model: "curie".into(),
            top_p: 0.9,
            presence_penalty: 0.5,
            frequency_penalty: 0.5,
            max_tokens: 48,
            n: 1,
            stop: Vec::new(),
            temperature: 1.0,
            logprobs: None,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!("top_p {} not in (0, 1]", self.top_p)));
        }
        if self.n == 0 || self.max_tokens == 0 {
            return Err(Error::Config("n and max_tokens must be at least 1".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::Config("temperature must be non-negative".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form; recorded in triple provenance.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn with_n(&self, n: u32) -> Self {
        GenerationConfig { n, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Other,
}

impl FinishReason {
    fn from_api(reason: Option<&str>) -> Self {
        match reason {
            Some("stop") => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            _ => FinishReason::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub finish_reason: FinishReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<TokenLogprob>>,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    top_p: f64,
    temperature: f64,
    n: u32,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    stop: &'a [String],
    presence_penalty: f64,
    frequency_penalty: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    logprobs: Option<u32>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
    #[serde(default)]
    index: usize,
    #[serde(default)]
    finish_reason: Option<String>,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    tokens: Vec<String>,
    token_logprobs: Vec<Option<f64>>,
}

impl Choice {
    fn into_result(self) -> Result<CompletionResult> {
        let token_logprobs = match self.logprobs {
            None => None,
            Some(lp) => {
                if lp.tokens.len() != lp.token_logprobs.len() {
                    return Err(Error::MalformedResponse(format!(
                        "{} tokens but {} logprobs",
                        lp.tokens.len(),
                        lp.token_logprobs.len()
                    )));
                }
                Some(
                    lp.tokens
                        .into_iter()
                        .zip(lp.token_logprobs)
                        .map(|(token, logprob)| TokenLogprob {
                            token,
                            logprob: logprob.unwrap_or(f64::NAN),
                        })
                        .collect(),
                )
            }
        };
        Ok(CompletionResult {
            text: self.text,
            finish_reason: FinishReason::from_api(self.finish_reason.as_deref()),
            token_logprobs,
        })
    }
}

/// Recorded completions keyed by SHA-256 of (prompt, config hash).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fixture {
    pub prompt: String,
    pub config_hash: String,
    pub results: Vec<CompletionResult>,
}

pub fn fixture_key(prompt: &str, config: &GenerationConfig) -> String {
    hex::encode(
        Sha256::new()
            .chain_update(prompt.as_bytes())
            .chain_update([0u8])
            .chain_update(config.config_hash().as_bytes())
            .finalize(),
    )
}

#[derive(Debug, Clone)]
pub struct FixtureStore {
    dir: PathBuf,
}

impl FixtureStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, prompt: &str, config: &GenerationConfig) -> Result<Vec<CompletionResult>> {
        let key = fixture_key(prompt, config);
        let path = self.path(&key);
        if !path.exists() {
            return Err(Error::FixtureMissing { key });
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let fixture: Fixture = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        Ok(fixture.results)
    }

    pub fn put(
        &self,
        prompt: &str,
        config: &GenerationConfig,
        results: &[CompletionResult],
    ) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let fixture = Fixture {
            prompt: prompt.to_string(),
            config_hash: config.config_hash(),
            results: results.to_vec(),
        };
        let mut bytes = serde_json::to_vec_pretty(&fixture).expect("fixture serializes");
        bytes.push(b'\n');
        jsonl::write_atomic(&self.path(&fixture_key(prompt, config)), &bytes)
    }
}

/// Counters accumulated over the life of a client.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientStats {
    pub http_requests: u64,
    pub retries: u64,
}

enum Backend {
    Live(Transport),
    Fixture(FixtureStore),
}

/// Completion client. Live mode talks HTTP (optionally recording what it
/// receives); fixture mode replays recorded responses and never touches the
/// network.
pub struct LlmClient {
    backend: Backend,
    record: Option<FixtureStore>,
}

impl LlmClient {
    pub fn live(
        base_url: &str,
        api_key: Option<String>,
        options: &TransportOptions,
    ) -> Result<Self> {
        Ok(LlmClient {
            backend: Backend::Live(Transport::new(base_url, api_key, options)?),
            record: None,
        })
    }

    pub fn fixtures(store: FixtureStore) -> Self {
        LlmClient {
            backend: Backend::Fixture(store),
            record: None,
        }
    }

    pub fn recording_to(mut self, store: FixtureStore) -> Self {
        self.record = Some(store);
        self
    }

    pub fn is_fixture_mode(&self) -> bool {
        matches!(self.backend, Backend::Fixture(_))
    }

    pub fn stats(&self) -> ClientStats {
        match &self.backend {
            Backend::Live(t) => ClientStats {
                http_requests: t.counters.http_requests.load(Ordering::Relaxed),
                retries: t.counters.retries.load(Ordering::Relaxed),
            },
            Backend::Fixture(_) => ClientStats::default(),
        }
    }

    /// Returns exactly `config.n` completions of `prompt`, prompt excluded.
    pub async fn complete(
        &self,
        prompt: &str,
        config: &GenerationConfig,
    ) -> Result<Vec<CompletionResult>> {
        config.validate()?;
        let results = match &self.backend {
            Backend::Fixture(store) => store.get(prompt, config)?,
            Backend::Live(transport) => {
                let request = CompletionRequest {
                    model: &config.model,
                    prompt,
                    max_tokens: config.max_tokens,
                    top_p: config.top_p,
                    temperature: config.temperature,
                    n: config.n,
                    stop: &config.stop,
                    presence_penalty: config.presence_penalty,
                    frequency_penalty: config.frequency_penalty,
                    logprobs: config.logprobs,
                };
                let response: CompletionResponse =
                    transport.post_json("/v1/completions", &request).await?;
                let mut choices = response.choices;
                choices.sort_by_key(|c| c.index);
                let results = choices
                    .into_iter()
                    .map(Choice::into_result)
                    .collect::<Result<Vec<_>>>()?;
                if let Some(store) = &self.record {
                    store.put(prompt, config, &results)?;
                }
                results
            }
        };
        if results.len() != config.n as usize {
            return Err(Error::MalformedResponse(format!(
                "expected {} completions, got {}",
                config.n,
                results.len()
            )));
        }
        Ok(results)
    }
}

/// Summed negative log-likelihood of one text, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NllScore {
    pub total_nll: f64,
    pub n_tokens: u64,
}

impl NllScore {
    pub fn token_mean(&self) -> f64 {
        self.total_nll / self.n_tokens as f64
    }
}

#[derive(Serialize)]
struct NllRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct NllResponse {
    results: Vec<NllScore>,
}

#[derive(Serialize)]
struct TripleRef<'a> {
    event: &'a str,
    relation: &'a str,
    tail: &'a str,
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    triples: Vec<TripleRef<'a>>,
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

/// Client for the scoring service (`/v1/nll` and `/v1/score`).
#[derive(Clone)]
pub struct ScorerClient {
    transport: Transport,
}

impl ScorerClient {
    pub fn new(base_url: &str, options: &TransportOptions) -> Result<Self> {
        Ok(ScorerClient {
            transport: Transport::new(base_url, None, options)?,
        })
    }

    pub fn url(&self) -> &str {
        self.transport.base_url()
    }

    pub async fn score_nll(&self, text: &str) -> Result<NllScore> {
        let mut out = self.score_nll_batch(&[text.to_string()]).await?;
        Ok(out.remove(0))
    }

    pub async fn score_nll_batch(&self, texts: &[String]) -> Result<Vec<NllScore>> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(Error::UntokenizableText);
        }
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let response: NllResponse = self
            .transport
            .post_json("/v1/nll", &NllRequest { texts })
            .await?;
        if response.results.len() != texts.len() {
            return Err(Error::MalformedResponse(format!(
                "expected {} NLL results, got {}",
                texts.len(),
                response.results.len()
            )));
        }
        for r in &response.results {
            if r.n_tokens == 0 {
                return Err(Error::UntokenizableText);
            }
            if !(r.total_nll.is_finite() && r.total_nll >= 0.0) {
                return Err(Error::MalformedResponse(format!(
                    "invalid total_nll {}",
                    r.total_nll
                )));
            }
        }
        Ok(response.results)
    }

    /// Raw critic scores from `/v1/score`; range checking is the caller's job.
    pub async fn score_triples(&self, triples: &[KnowledgeTriple]) -> Result<Vec<f64>> {
        if triples.is_empty() {
            return Ok(Vec::new());
        }
        let request = ScoreRequest {
            triples: triples
                .iter()
                .map(|t| TripleRef {
                    event: t.event.as_str(),
                    relation: t.relation.name(),
                    tail: &t.tail,
                })
                .collect(),
        };
        let response: ScoreResponse = self.transport.post_json("/v1/score", &request).await?;
        if response.scores.len() != triples.len() {
            return Err(Error::MalformedResponse(format!(
                "expected {} scores, got {}",
                triples.len(),
                response.scores.len()
            )));
        }
        Ok(response.scores)
    }
}
