//! Run configuration files and oracle binding arguments.

use std::path::{Path, PathBuf};

use evoattack::{AttackConfig, AttackMode, TranscriberBinding, Transcript};
use serde_json::Value;

use crate::HarnessError;

/// One JSON document: every [`AttackConfig`] field, plus the oracle binding
/// and, for targeted runs without a fixed `target_text`, a phrase corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub attack: AttackConfig,
    pub oracle: TranscriberBinding,
    /// Per-sample target source when `target_text` is absent.
    pub target_corpus: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            HarnessError::Json { source, .. } => HarnessError::Json { path: path.into(), source },
            other => other,
        })?;
        // Relative corpus paths are taken from the config file's directory.
        if let (Some(corpus), Some(dir)) = (&mut cfg.target_corpus, path.parent()) {
            if corpus.is_relative() {
                *corpus = dir.join(&*corpus);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut doc: Value = serde_json::from_str(text).map_err(HarnessError::json("<config>"))?;
        let obj = doc
            .as_object_mut()
            .ok_or_else(|| HarnessError::Config("config must be a JSON object".into()))?;
        let oracle = match obj.remove("oracle") {
            Some(v) => serde_json::from_value(v).map_err(HarnessError::json("<config>.oracle"))?,
            None => TranscriberBinding::default(),
        };
        let target_corpus = match obj.remove("target_corpus") {
            Some(Value::String(p)) => Some(PathBuf::from(p)),
            Some(_) => return Err(HarnessError::Config("target_corpus must be a path string".into())),
            None => None,
        };
        obj.entry("mode").or_insert_with(|| Value::String("untargeted".into()));
        let targeted = obj.get("mode").and_then(Value::as_str) == Some("targeted");
        let needs_corpus = targeted && !obj.contains_key("target_text");
        if needs_corpus {
            if target_corpus.is_none() {
                return Err(HarnessError::Config(
                    "targeted mode needs target_text or target_corpus".into(),
                ));
            }
            // Filled in per sample by the attack command.
            obj.insert("target_text".into(), Value::String(String::new()));
        }
        let attack: AttackConfig = serde_json::from_value(doc).map_err(HarnessError::json("<config>"))?;
        let cfg = RunConfig {
            attack,
            oracle,
            target_corpus: if needs_corpus { target_corpus } else { None },
        };
        cfg.oracle.validate()?;
        if !needs_corpus {
            cfg.attack.validate()?;
        }
        Ok(cfg)
    }

    /// Config for one sample: its own seed, and its target if drawn per sample.
    pub fn for_sample(&self, seed: u64, target: Option<Transcript>) -> AttackConfig {
        let mut cfg = self.attack.clone();
        cfg.seed = seed;
        if let Some(t) = target {
            cfg.mode = AttackMode::Targeted { target_text: t };
        }
        cfg
    }
}

/// `--oracle` accepts `toy`, a path to a JSON binding file, or inline JSON.
pub fn parse_binding(arg: &str) -> Result<TranscriberBinding, HarnessError> {
    let binding: TranscriberBinding = if arg == "toy" {
        TranscriberBinding::toy()
    } else if arg.trim_start().starts_with('{') {
        serde_json::from_str(arg).map_err(HarnessError::json("--oracle"))?
    } else {
        let text = std::fs::read_to_string(arg).map_err(HarnessError::io(arg))?;
        serde_json::from_str(&text).map_err(HarnessError::json(arg))?
    };
    binding.validate()?;
    Ok(binding)
}
