use super::names::replace_whole_words;
use crate::corpus::{normalize_text, Event, MARKER_X, MARKER_Y};
use crate::error::{Error, Result};

/// Splits the continuation of an `N. Event:` prompt into candidate events.
///
/// The first line continues the primed slot; every later nonblank line must
/// look like `k. Event: ...` or parsing stops. Bare `X` / `Y` are read as
/// the generic markers. Fragments that are not valid events are dropped.
pub fn parse_event_completion(raw: &str) -> Vec<String> {
    let mut fragments = Vec::new();
    let mut lines = raw.lines();
    if let Some(first) = lines.next() {
        fragments.push(first);
    }
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        match strip_event_marker(line) {
            Some(rest) => fragments.push(rest),
            None => break,
        }
    }
    fragments
        .into_iter()
        .filter_map(|f| {
            let text = replace_whole_words(&normalize_text(f), &[("X", MARKER_X), ("Y", MARKER_Y)]);
            Event::new(&text).ok().map(String::from)
        })
        .collect()
}

fn strip_event_marker(line: &str) -> Option<&str> {
    let line = line.trim_start();
    let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return None;
    }
    let rest = line[digits..].strip_prefix('.')?.trim_start();
    rest.strip_prefix("Event:")
}

/// Ends the tail at a newline, a `Situation` marker or a numbered block.
fn cut_at_block_end(raw: &str) -> &str {
    let line = raw
        .trim_start_matches([' ', '\t'])
        .lines()
        .next()
        .unwrap_or_default();
    let mut end = line.len();
    if let Some(i) = line.find("Situation") {
        end = end.min(i);
    }
    // " 12. " style numbering inside the same line
    let bytes = line.as_bytes();
    for i in 0..bytes.len() {
        if i >= end {
            break;
        }
        if bytes[i] == b' ' {
            let rest = &line[i + 1..];
            let digits = rest.len() - rest.trim_start_matches(|c: char| c.is_ascii_digit()).len();
            if digits > 0 && rest[digits..].starts_with(". ") {
                end = i;
                break;
            }
        }
    }
    &line[..end]
}

pub(crate) fn parse_inference_text(raw: &str, connective: Option<&str>) -> Result<String> {
    let mut text = cut_at_block_end(raw).trim().trim_end_matches(|c: char| {
        matches!(c, '.' | ',' | ';' | ':' | '!' | '?') || c.is_whitespace()
    });
    if let Some(conn) = connective {
        if let Some(rest) = text.strip_prefix(conn) {
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                text = rest.trim_start();
            }
        }
    }
    let text = normalize_text(text);
    if text.is_empty() {
        return Err(Error::EmptyCompletion);
    }
    Ok(text)
}
