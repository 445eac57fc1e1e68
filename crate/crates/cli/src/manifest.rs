//! Manifest and report documents, with their aggregate rows.

use std::path::{Path, PathBuf};

use evoattack::{ObjectiveVector, TranscriberBinding, Transcript};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// One attacked input. Failed samples keep whatever was known before the
/// failure plus the error message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub input: PathBuf,
    pub seed: u64,
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_transcript: Option<Transcript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Transcript>,
    /// Adversarial WAV, relative to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<Transcript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objectives: Option<ObjectiveVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_distance_to_original: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_distance_to_target: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized_wer: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_calls: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SampleEntry {
    pub fn new(input: PathBuf, seed: u64, mode: &str) -> Self {
        Self {
            input,
            seed,
            mode: mode.to_owned(),
            original_transcript: None,
            target: None,
            output: None,
            history: None,
            transcript: None,
            objectives: None,
            edit_distance_to_original: None,
            edit_distance_to_target: None,
            normalized_wer: None,
            cc: None,
            generations: None,
            converged: None,
            oracle_calls: None,
            error: None,
        }
    }
}

/// Mean of the present values, `None` when there are none.
pub fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Aggregates over the successful rows of a manifest. `wer` is the mean raw
/// word edit count (it can exceed 1); `normalized_wer` divides by reference length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Means {
    pub samples: usize,
    pub failed: usize,
    /// Mean raw word edit distance to the original transcript.
    pub wer: Option<f64>,
    pub normalized_wer: Option<f64>,
    pub edit_distance_to_target: Option<f64>,
    pub cc: Option<f64>,
}

impl Means {
    pub fn of(rows: &[SampleEntry]) -> Self {
        Self {
            samples: rows.len(),
            failed: rows.iter().filter(|r| r.error.is_some()).count(),
            wer: mean(rows.iter().filter_map(|r| r.edit_distance_to_original.map(|d| d as f64))),
            normalized_wer: mean(rows.iter().filter_map(|r| r.normalized_wer)),
            edit_distance_to_target: mean(rows.iter().filter_map(|r| r.edit_distance_to_target.map(|d| d as f64))),
            cc: mean(rows.iter().filter_map(|r| r.cc)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub oracle: TranscriberBinding,
    pub samples: Vec<SampleEntry>,
    pub means: Means,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(oracle: TranscriberBinding, samples: Vec<SampleEntry>, warnings: Vec<String>) -> Self {
        let means = Means::of(&samples);
        Self { oracle, samples, means, warnings }
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        serde_json::from_str(&text).map_err(HarnessError::json(path))
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(self).map_err(HarnessError::json(path))?;
        std::fs::write(path, text + "\n").map_err(HarnessError::io(path))
    }
}

/// One (original, adversarial) pair re-scored by an oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub original: PathBuf,
    pub adversarial: PathBuf,
    pub reference: Transcript,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_hypothesis: Option<Transcript>,
    /// Oracle-vs-reference distance on the unmodified original.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_edit_distance: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<Transcript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_distance: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized_wer: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cc_skipped: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationMeans {
    pub pairs: usize,
    pub failed: usize,
    /// Mean raw word edit distance of the adversarial transcripts.
    pub wer: Option<f64>,
    pub normalized_wer: Option<f64>,
    pub cc: Option<f64>,
    /// The same figure for the unmodified originals.
    pub baseline_wer: Option<f64>,
}

impl EvaluationMeans {
    pub fn of(rows: &[EvaluationRow]) -> Self {
        Self {
            pairs: rows.len(),
            failed: rows.iter().filter(|r| r.error.is_some()).count(),
            wer: mean(rows.iter().filter_map(|r| r.edit_distance.map(|d| d as f64))),
            normalized_wer: mean(rows.iter().filter_map(|r| r.normalized_wer)),
            cc: mean(rows.iter().filter_map(|r| r.cc)),
            baseline_wer: mean(rows.iter().filter_map(|r| r.original_edit_distance.map(|d| d as f64))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub oracle: TranscriberBinding,
    pub rows: Vec<EvaluationRow>,
    pub means: EvaluationMeans,
}
