//! Batch harness around the attack engine: config files, target phrases,
//! run manifests, and the evaluation and transfer reports built from them.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod target;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{attack_command, evaluate_command, transfer_command, AttackRun};
pub use config::{parse_binding, RunConfig};
pub use manifest::{EvaluationReport, EvaluationRow, Means, RunManifest, SampleEntry};
pub use target::{generate_target, TargetTextSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("no corpus phrase has between 2 and {max} words")]
    NoEligiblePhrase { max: usize },
    #[error(transparent)]
    Audio(#[from] evoattack::AudioError),
    #[error(transparent)]
    Oracle(#[from] evoattack::oracle::OracleError),
    #[error(transparent)]
    Engine(#[from] evoattack::EngineError),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Self {
        let path = path.into();
        move |source| Self::Json { path, source }
    }
}

/// Process exit status for a finished command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success = 0,
    PartialFailure = 1,
    ConfigError = 2,
}

impl Outcome {
    pub fn from_failures(failed: usize) -> Self {
        if failed == 0 {
            Outcome::Success
        } else {
            Outcome::PartialFailure
        }
    }
}
