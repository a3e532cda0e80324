//! Text normalization and the predicates built on it.

use unicode_normalization::UnicodeNormalization;

pub const MARKER_X: &str = "PersonX";
pub const MARKER_Y: &str = "PersonY";

/// Minimum number of characters a tail needs to be kept.
pub const MIN_TAIL_CHARS: usize = 3;

/// NFC-normalizes, trims and collapses internal whitespace runs to one space.
/// Case is preserved.
pub fn normalize_text(raw: &str) -> String {
    let nfc: String = raw.nfc().collect();
    let mut out = String::with_capacity(nfc.len());
    for word in nfc.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// A tail is degenerate when it is shorter than three characters or carries
/// nothing besides generic markers, punctuation and whitespace.
pub fn is_degenerate(tail: &str) -> bool {
    let trimmed = tail.trim();
    if trimmed.chars().count() < MIN_TAIL_CHARS {
        return true;
    }
    let residue = trimmed.replace(MARKER_X, "").replace(MARKER_Y, "");
    residue
        .chars()
        .all(|c| c.is_whitespace() || is_punctuation(c))
}

pub(crate) fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{00A1}' | '\u{00AB}' | '\u{00BB}' | '\u{00BF}'
        )
}

/// The pinned analysis tokenizer: lowercase, drop punctuation characters,
/// split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| !is_punctuation(*c))
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}
