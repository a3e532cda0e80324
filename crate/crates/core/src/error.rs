use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown relation name {0:?}")]
    UnknownRelation(String),

    #[error("invalid event {text:?}: {reason}")]
    InvalidEvent { text: String, reason: &'static str },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("no labels")]
    NoLabels,

    #[error("inconsistent label group: expected {expected}, found {found}")]
    InconsistentLabelGroup { expected: String, found: String },

    #[error("too few labels to split ({0} < 10)")]
    TooFewLabels(usize),

    #[error("degenerate label set: need at least one accepted and one rejected item")]
    DegenerateLabelSet,

    #[error("empty reference set")]
    EmptyReferences,

    #[error("empty sample")]
    EmptySample,

    #[error("empty completion")]
    EmptyCompletion,

    #[error("missing score for triple {0}")]
    MissingScore(String),

    #[error("score {score} for triple {triple_id} is outside [0, 1]")]
    ScoreOutOfRange { triple_id: String, score: f64 },

    #[error("evaluation contamination: {count} holdout ids also appear in training ids (first: {first})")]
    Contamination { count: usize, first: String },

    #[error("untokenizable text")]
    UntokenizableText,

    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },

    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },

    #[error("malformed response: {0}")]
    MalformedResponse(String),

    #[error("service unreachable: {0}")]
    Unreachable(String),

    #[error("no fixture recorded for key {key}")]
    FixtureMissing { key: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 usage/config, 2 data, 3 remote service.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Template(_) => 1,
            Error::Http { .. }
            | Error::RetriesExhausted { .. }
            | Error::MalformedResponse(_)
            | Error::Unreachable(_)
            | Error::FixtureMissing { .. } => 3,
            _ => 2,
        }
    }
}

/// Truncates a payload for inclusion in an error message.
pub(crate) fn excerpt(body: &str) -> String {
    const LIMIT: usize = 200;
    match body.char_indices().nth(LIMIT) {
        Some((idx, _)) => format!("{}...", &body[..idx]),
        None => body.to_string(),
    }
}
