use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{MARKER_X, MARKER_Y};
use crate::error::{Error, Result};

/// Natural names standing in for `PersonX` / `PersonY` while prompting.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NameAssignment {
    pub name_x: String,
    pub name_y: String,
}

impl NameAssignment {
    pub fn new(name_x: &str, name_y: &str) -> Result<Self> {
        if name_x.is_empty() || name_y.is_empty() {
            return Err(Error::InvalidInput("names must be nonempty".into()));
        }
        if name_x.contains(name_y) || name_y.contains(name_x) {
            return Err(Error::InvalidInput(format!(
                "names {name_x:?} and {name_y:?} overlap"
            )));
        }
        Ok(NameAssignment {
            name_x: name_x.to_string(),
            name_y: name_y.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamePool {
    pub x: Vec<String>,
    pub y: Vec<String>,
}

impl Default for NamePool {
    fn default() -> Self {
        let own = |names: &[&str]| names.iter().map(|s| s.to_string()).collect();
        NamePool {
            x: own(&[
                "Devin", "Jamie", "Sydney", "Lindsay", "Rowan", "Lee", "Riley", "Adrian", "Hunter",
                "Sam", "Alex", "Chris",
            ]),
            y: own(&[
                "Jean", "Ryan", "Pat", "Ali", "Noel", "Avery", "Taylor", "Charlie", "Wyatt",
                "Chris",
            ]),
        }
    }
}

impl NamePool {
    /// Deterministic draw keyed by `key` (an event id) and the run seed.
    pub fn assign(&self, key: &str, seed: u64) -> Result<NameAssignment> {
        let digest = Sha256::new()
            .chain_update(key.as_bytes())
            .chain_update(seed.to_le_bytes())
            .finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(bytes));
        for _ in 0..64 {
            let (Some(x), Some(y)) = (self.x.choose(&mut rng), self.y.choose(&mut rng)) else {
                break;
            };
            if let Ok(names) = NameAssignment::new(x, y) {
                return Ok(names);
            }
        }
        // fall back to the first compatible pair in pool order
        self.x
            .iter()
            .flat_map(|x| self.y.iter().map(move |y| (x, y)))
            .find_map(|(x, y)| NameAssignment::new(x, y).ok())
            .ok_or_else(|| Error::Config("name pool has no compatible (x, y) pair".into()))
    }
}

/// Replaces every `PersonX` / `PersonY` with the assigned names.
pub fn substitute_names(text: &str, names: &NameAssignment) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find("Person") {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix(MARKER_X) {
            out.push_str(&names.name_x);
            rest = after;
        } else if let Some(after) = tail.strip_prefix(MARKER_Y) {
            out.push_str(&names.name_y);
            rest = after;
        } else {
            out.push_str("Person");
            rest = &tail["Person".len()..];
        }
    }
    out.push_str(rest);
    out
}

/// Whole-word replacement of the assigned names back to generic markers.
pub fn restore_markers(text: &str, names: &NameAssignment) -> String {
    replace_whole_words(
        text,
        &[(&names.name_x, MARKER_X), (&names.name_y, MARKER_Y)],
    )
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

pub(crate) fn replace_whole_words(text: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let mut prev: Option<char> = None;
    'scan: while i < text.len() {
        let rest = &text[i..];
        if !prev.is_some_and(is_word_char) {
            for (from, to) in pairs {
                if !from.is_empty() && rest.starts_with(from) {
                    let after = rest[from.len()..].chars().next();
                    if !after.is_some_and(is_word_char) {
                        out.push_str(to);
                        i += from.len();
                        prev = from.chars().last();
                        continue 'scan;
                    }
                }
            }
        }
        let c = rest.chars().next().expect("non-empty remainder");
        out.push(c);
        prev = Some(c);
        i += c.len_utf8();
    }
    out
}
