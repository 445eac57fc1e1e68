//! Transcript normalization and word-level edit distance.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A normalized word sequence: lowercase `[a-z0-9]` tokens, no empty tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub struct Transcript {
    words: Vec<String>,
}

impl Transcript {
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

impl From<&str> for Transcript {
    fn from(raw: &str) -> Self {
        normalize(raw)
    }
}

impl From<String> for Transcript {
    fn from(raw: String) -> Self {
        normalize(&raw)
    }
}

impl From<Transcript> for String {
    fn from(t: Transcript) -> Self {
        t.text()
    }
}

/// Lowercases, drops every character outside `[a-z0-9 ]` (apostrophes
/// included), and splits on whitespace.
pub fn normalize(raw: &str) -> Transcript {
    let cleaned: String = raw
        .chars()
        .flat_map(char::to_lowercase)
        .filter_map(|c| {
            if c.is_ascii_lowercase() || c.is_ascii_digit() {
                Some(c)
            } else if c.is_whitespace() {
                Some(' ')
            } else {
                None
            }
        })
        .collect();
    Transcript {
        words: cleaned.split_whitespace().map(str::to_owned).collect(),
    }
}

/// Levenshtein distance over word tokens with unit costs.
pub fn word_edit_distance(a: &Transcript, b: &Transcript) -> usize {
    levenshtein(a.words(), b.words())
}

/// Unit-cost Levenshtein distance between two token slices.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0; b.len() + 1];
    for (i, ta) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, tb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ta != tb);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Word error figures for one reference/hypothesis pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WerReport {
    /// Raw word edit distance, the unnormalized "WER" used in result tables.
    pub edits: f64,
    pub reference_words: usize,
    /// `edits / reference_words`, absent for an empty reference.
    pub normalized: Option<f64>,
}

/// Raw word edit distance between reference and hypothesis.
pub fn wer(reference: &Transcript, hypothesis: &Transcript) -> f64 {
    word_edit_distance(reference, hypothesis) as f64
}

pub fn wer_report(reference: &Transcript, hypothesis: &Transcript) -> WerReport {
    let edits = wer(reference, hypothesis);
    let reference_words = reference.len();
    WerReport {
        edits,
        reference_words,
        normalized: (reference_words > 0).then(|| edits / reference_words as f64),
    }
}
