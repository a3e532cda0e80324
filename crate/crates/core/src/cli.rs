//! Command-line entry point.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{analyze, entropy_report};
use crate::client::ScorerClient;
use crate::config::RunConfig;
use crate::corpus::{
    aggregate_label_groups, load_corpus, save_corpus, split_labeled, Corpus, Event, HumanLabel,
    LabeledTriple,
};
use crate::critic::{
    evaluate_critic, filter_at_threshold, join_labels, load_scores, parse_cutoff, save_scores,
    score_corpus, sweep_report, CutoffPresets, ScorerBinding, DEFAULT_GRID,
};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::pipeline::{generate_events, generate_inferences};

#[derive(Debug, Parser)]
#[command(
    name = "kbdistill",
    version,
    about = "Distill a commonsense knowledge-triple corpus from a language model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportOut {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate unique events from the seed pool.
    GenerateEvents {
        #[command(flatten)]
        config: ConfigArg,
        /// Overrides the plan's target event count.
        #[arg(long)]
        target: Option<usize>,
        /// Events JSONL output.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        report: ReportOut,
    },
    /// Generate inferences for every event and relation.
    GenerateInferences {
        #[command(flatten)]
        config: ConfigArg,
        /// Events JSONL (rows with an "event" field).
        #[arg(long)]
        events: PathBuf,
        /// Corpus JSONL output.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        report: ReportOut,
    },
    /// Human label handling.
    #[command(subcommand)]
    Labels(LabelsCommand),
    /// Score a corpus with the configured critic.
    Score {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        corpus: PathBuf,
        /// Scorer binding as inline JSON; overrides the config.
        #[arg(long)]
        binding: Option<String>,
        /// Scores JSONL output.
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune the critic_low / critic_high cutoffs on dev scores.
    TuneCutoffs {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keep triples whose score reaches the cutoff.
    Filter {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        /// A number or a preset name.
        #[arg(long)]
        cutoff: String,
        /// Presets JSON; falls back to the config's presets.
        #[arg(long)]
        presets: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corpus size and holdout precision across cutoffs.
    Sweep {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        /// Labeled holdout JSONL.
        #[arg(long)]
        holdout: PathBuf,
        /// Comma-separated numbers, presets or name=value pairs.
        #[arg(long, value_delimiter = ',', required = true)]
        cutoffs: Vec<String>,
        #[arg(long)]
        presets: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSONL of critic training rows; their ids must not occur in the holdout.
        #[arg(long)]
        training_ids: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average precision, recall at precision and the precision curve.
    EvalCritic {
        #[arg(long)]
        scores: PathBuf,
        /// Labeled JSONL.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        target_precision: f64,
        /// Kept fractions for the precision curve.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lexical statistics, soft-unique size and, with a config, entropy.
    Analyze {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the student training file.
    Export {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum LabelsCommand {
    /// Majority-vote raw annotator labels into labeled triples.
    Aggregate {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded 80/10/10 split into train/dev/test JSONL.
    Split {
        #[arg(long)]
        labeled: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Config(format!("cannot start runtime: {e}")))?;
    runtime.block_on(dispatch(cli.command))
}

fn write_report<T: Serialize>(report: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report).expect("reports serialize");
    text.push('\n');
    match out {
        Some(path) => jsonl::write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn presets(path: Option<&Path>, config: Option<&Path>) -> Result<Option<CutoffPresets>> {
    if let Some(p) = path {
        return read_json(p).map(Some);
    }
    match config {
        Some(c) => Ok(RunConfig::load(c)?.presets),
        None => Ok(None),
    }
}

#[derive(Deserialize)]
struct EventRow {
    event: Event,
}

#[derive(Deserialize)]
struct IdRow {
    id: String,
}

fn labeled_pairs(rows: &[LabeledTriple]) -> Vec<(String, crate::corpus::Verdict)> {
    rows.iter()
        .map(|r| (r.triple.id.clone(), r.verdict))
        .collect()
}

/// One line per triple in the student training format.
pub fn training_text(corpus: &Corpus) -> String {
    corpus.iter().map(|t| t.render() + "\n").collect()
}

async fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenerateEvents {
            config,
            target,
            out,
            report,
        } => {
            let config = RunConfig::load(&config.config)?;
            let mut plan = config.effective_plan();
            if let Some(t) = target {
                plan.target_event_count = t;
            }
            let client = config.client()?;
            let pinned = config.pinned_created_at();
            let start = Instant::now();
            let (events, mut run) = generate_events(
                &plan,
                &config.seed_pool()?,
                &config.templates()?,
                &client,
                pinned.unwrap_or_else(Utc::now),
            )
            .await?;
            if pinned.is_none() {
                run.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
            }
            jsonl::write(&out, &events)?;
            write_report(&run, report.report.as_deref())
        }
        Command::GenerateInferences {
            config,
            events,
            out,
            report,
        } => {
            let config = RunConfig::load(&config.config)?;
            let rows: Vec<EventRow> = jsonl::read(&events)?;
            let events: Vec<Event> = rows.into_iter().map(|r| r.event).collect();
            let client = config.client()?;
            let pinned = config.pinned_created_at();
            let start = Instant::now();
            let (corpus, mut run) = generate_inferences(
                &events,
                &config.effective_plan(),
                &config.templates()?,
                &client,
                pinned.unwrap_or_else(Utc::now),
            )
            .await?;
            if pinned.is_none() {
                run.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
            }
            save_corpus(&corpus, &out)?;
            write_report(&run, report.report.as_deref())
        }
        Command::Labels(LabelsCommand::Aggregate {
            labels,
            corpus,
            out,
        }) => {
            let labels: Vec<HumanLabel> = jsonl::read(&labels)?;
            if labels.is_empty() {
                return Err(Error::NoLabels);
            }
            let labeled = aggregate_label_groups(&labels, &load_corpus(&corpus)?)?;
            jsonl::write(&out, &labeled)
        }
        Command::Labels(LabelsCommand::Split {
            labeled,
            seed,
            out_dir,
        }) => {
            let rows: Vec<LabeledTriple> = jsonl::read(&labeled)?;
            let split = split_labeled(&rows, seed)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            jsonl::write(&out_dir.join("train.jsonl"), &split.train)?;
            jsonl::write(&out_dir.join("dev.jsonl"), &split.dev)?;
            jsonl::write(&out_dir.join("test.jsonl"), &split.test)
        }
        Command::Score {
            config,
            corpus,
            binding,
            out,
        } => {
            let config = RunConfig::load(&config.config)?;
            let binding: ScorerBinding = match binding {
                Some(json) => serde_json::from_str(&json)
                    .map_err(|e| Error::Config(format!("--binding: {e}")))?,
                None => config
                    .scorer
                    .clone()
                    .ok_or_else(|| Error::Config("no scorer binding configured".into()))?,
            };
            let scores =
                score_corpus(&load_corpus(&corpus)?, &binding, &config.scorer_transport).await?;
            save_scores(&scores, &out)
        }
        Command::TuneCutoffs { scores, out } => {
            let scores: Vec<f64> = load_scores(&scores)?.into_iter().map(|s| s.score).collect();
            write_report(&CutoffPresets::tune(&scores)?, out.as_deref())
        }
        Command::Filter {
            corpus,
            scores,
            cutoff,
            presets: presets_path,
            config,
            out,
        } => {
            let presets = presets(presets_path.as_deref(), config.as_deref())?;
            let cutoff = parse_cutoff(&cutoff, presets.as_ref())?;
            let kept = filter_at_threshold(
                &load_corpus(&corpus)?,
                &load_scores(&scores)?,
                cutoff.threshold,
            )?;
            save_corpus(&kept, &out)
        }
        Command::Sweep {
            corpus,
            scores,
            holdout,
            cutoffs,
            presets: presets_path,
            config,
            training_ids,
            out,
        } => {
            let presets = presets(presets_path.as_deref(), config.as_deref())?;
            let cutoffs = cutoffs
                .iter()
                .map(|c| parse_cutoff(c, presets.as_ref()))
                .collect::<Result<Vec<_>>>()?;
            let scores = load_scores(&scores)?;
            let holdout: Vec<LabeledTriple> = jsonl::read(&holdout)?;
            let holdout = join_labels(&scores, &labeled_pairs(&holdout))?;
            let training: HashSet<String> = match training_ids {
                Some(p) => jsonl::read::<IdRow>(&p)?
                    .into_iter()
                    .map(|r| r.id)
                    .collect(),
                None => HashSet::new(),
            };
            let report = sweep_report(
                &load_corpus(&corpus)?,
                &scores,
                &holdout,
                &cutoffs,
                &training,
            )?;
            write_report(&report, out.as_deref())
        }
        Command::EvalCritic {
            scores,
            labels,
            target_precision,
            grid,
            out,
        } => {
            let rows: Vec<LabeledTriple> = jsonl::read(&labels)?;
            let items = join_labels(&load_scores(&scores)?, &labeled_pairs(&rows))?;
            let grid = if grid.is_empty() {
                DEFAULT_GRID.to_vec()
            } else {
                grid
            };
            write_report(
                &evaluate_critic(&items, target_precision, &grid)?,
                out.as_deref(),
            )
        }
        Command::Analyze {
            corpus,
            config,
            out,
        } => {
            let corpus = load_corpus(&corpus)?;
            let mut report = analyze(&corpus);
            if let Some(path) = config {
                let config = RunConfig::load(&path)?;
                if let Some(entropy) = &config.entropy {
                    let n = entropy.sample_size.min(corpus.len());
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed());
                    let mut picked = sample(&mut rng, corpus.len(), n).into_vec();
                    picked.sort_unstable();
                    let sample: Vec<_> = picked
                        .into_iter()
                        .map(|i| corpus.entries[i].clone())
                        .collect();
                    let self_scorer =
                        ScorerClient::new(&entropy.self_url, &config.scorer_transport)?;
                    let cross_scorer =
                        ScorerClient::new(&entropy.cross_url, &config.scorer_transport)?;
                    report.entropy =
                        Some(entropy_report(&sample, &self_scorer, &cross_scorer).await?);
                }
            }
            write_report(&report, out.as_deref())
        }
        Command::Export { corpus, out } => {
            jsonl::write_atomic(&out, training_text(&load_corpus(&corpus)?).as_bytes())
        }
    }
}
