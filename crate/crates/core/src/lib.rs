//! Building blocks for distilling a commonsense knowledge-triple corpus from
//! a text-completion model: prompt rendering, generation, critic filtering,
//! evaluation and corpus analytics.

pub mod analytics;
pub mod cli;
pub mod client;
pub mod config;
pub mod corpus;
pub mod critic;
pub mod error;
pub mod jsonl;
pub mod pipeline;
pub mod prompt;

pub use error::{Error, Result};
