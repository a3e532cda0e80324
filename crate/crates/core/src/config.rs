//! JSON run configuration shared by the CLI subcommands.

use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::client::{FixtureStore, LlmClient, TransportOptions};
use crate::critic::{CutoffPresets, ScorerBinding};
use crate::error::{Error, Result};
use crate::pipeline::GenerationPlan;
use crate::prompt::{SeedPool, TemplateSet};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL of an OpenAI-compatible completions service.
    pub base_url: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    /// Fixture directory; replayed when no base_url is set, recorded into
    /// when `record` is set.
    pub fixture_dir: Option<PathBuf>,
    pub record: bool,
    pub transport: TransportOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyConfig {
    /// NLL service for the model that produced the corpus.
    pub self_url: String,
    /// NLL service for the comparison model.
    pub cross_url: String,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
}

fn default_sample_size() -> usize {
    1000
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub endpoint: EndpointConfig,
    pub plan: GenerationPlan,
    /// Overrides `plan.rng_seed` and seeds label splits and sampling.
    pub rng_seed: Option<u64>,
    pub scorer: Option<ScorerBinding>,
    pub scorer_transport: TransportOptions,
    pub presets: Option<CutoffPresets>,
    pub entropy: Option<EntropyConfig>,
    pub seed_pool: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    /// Fixed creation timestamp for provenance; implied in fixture mode.
    pub created_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndpointMode {
    Live,
    LiveRecording,
    Fixture,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.seed_pool,
            &mut self.templates,
            &mut self.endpoint.fixture_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        if let Some(s) = &self.scorer {
            s.validate()?;
        }
        for (name, path) in [
            ("seed_pool", &self.seed_pool),
            ("templates", &self.templates),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "{name} path {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        let e = &self.endpoint;
        if e.base_url.is_none() && e.fixture_dir.is_none() && !e.record {
            // commands that never call the completion service
            return Ok(());
        }
        self.mode().map(|_| ())
    }

    pub fn mode(&self) -> Result<EndpointMode> {
        let e = &self.endpoint;
        match (&e.base_url, &e.fixture_dir, e.record) {
            (Some(_), None, false) => Ok(EndpointMode::Live),
            (Some(_), Some(_), true) => Ok(EndpointMode::LiveRecording),
            (None, Some(dir), false) => {
                if !dir.is_dir() {
                    return Err(Error::Config(format!(
                        "fixture_dir {} does not exist",
                        dir.display()
                    )));
                }
                Ok(EndpointMode::Fixture)
            }
            (_, None, true) => Err(Error::Config(
                "record needs both base_url and fixture_dir".into(),
            )),
            (None, None, _) => Err(Error::Config(
                "endpoint needs base_url or fixture_dir".into(),
            )),
            (Some(_), Some(_), false) => Err(Error::Config(
                "base_url and fixture_dir are both set; set record to record fixtures".into(),
            )),
            (None, Some(_), true) => Err(Error::Config("record needs a base_url".into())),
        }
    }

    pub fn effective_plan(&self) -> GenerationPlan {
        let mut plan = self.plan.clone();
        if let Some(seed) = self.rng_seed {
            plan.rng_seed = seed;
        }
        plan
    }

    pub fn seed(&self) -> u64 {
        self.rng_seed.unwrap_or(self.plan.rng_seed)
    }

    pub fn client(&self) -> Result<LlmClient> {
        let e = &self.endpoint;
        let api_key = match &e.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| Error::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        Ok(match self.mode()? {
            EndpointMode::Live => {
                LlmClient::live(e.base_url.as_deref().expect("live"), api_key, &e.transport)?
            }
            EndpointMode::LiveRecording => {
                LlmClient::live(e.base_url.as_deref().expect("live"), api_key, &e.transport)?
                    .recording_to(FixtureStore::new(e.fixture_dir.clone().expect("recording")))
            }
            EndpointMode::Fixture => {
                LlmClient::fixtures(FixtureStore::new(e.fixture_dir.clone().expect("fixture")))
            }
        })
    }

    /// Pinned timestamp, if any: the configured one, or the epoch in fixture
    /// mode.
    pub fn pinned_created_at(&self) -> Option<DateTime<Utc>> {
        self.created_at.or_else(|| {
            matches!(self.mode(), Ok(EndpointMode::Fixture))
                .then(|| Utc.timestamp_opt(0, 0).unwrap())
        })
    }

    pub fn seed_pool(&self) -> Result<SeedPool> {
        match &self.seed_pool {
            Some(p) => SeedPool::load(p),
            None => Ok(SeedPool::builtin()),
        }
    }

    pub fn templates(&self) -> Result<TemplateSet> {
        match &self.templates {
            Some(p) => TemplateSet::load_dir(p),
            None => Ok(TemplateSet::builtin()),
        }
    }
}
