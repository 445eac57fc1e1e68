//! The black-box boundary: anything mapping audio to a transcript.
//!
//! Bindings expose only the transcript. A deterministic toy recognizer is
//! bundled so the full attack pipeline runs without a real ASR system.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioClip, AudioError};
use crate::text::{normalize, Transcript};

/// Placeholder substituted with the candidate WAV path in subprocess commands.
pub const INPUT_PLACEHOLDER: &str = "{input}";

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("failed to launch transcriber: {0}")]
    Spawn(std::io::Error),
    #[error("transcriber exited with {status}: {stderr}")]
    Exit { status: String, stderr: String },
    #[error("transcriber returned HTTP status {0}")]
    Status(u16),
    #[error("transcriber timed out")]
    Timeout,
    #[error("malformed transcriber response: {0}")]
    Malformed(String),
    #[error("transcriber request failed: {0}")]
    Transport(String),
    #[error("invalid binding: {0}")]
    Binding(String),
    #[error("bindings of kind `{0}` are not compiled into this build")]
    Unavailable(&'static str),
    #[error("cannot read toy vocabulary {path}: {source}")]
    Vocabulary {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A black-box speech recognizer.
pub trait Transcriber: Send + Sync {
    /// Returns the normalized transcript of `clip`. Must not depend on
    /// anything but the clip's samples and rate.
    fn transcribe(&self, clip: &AudioClip) -> Result<Transcript, OracleError>;
}

impl<T: Transcriber + ?Sized> Transcriber for Box<T> {
    fn transcribe(&self, clip: &AudioClip) -> Result<Transcript, OracleError> {
        (**self).transcribe(clip)
    }
}

impl<T: Transcriber + ?Sized> Transcriber for &T {
    fn transcribe(&self, clip: &AudioClip) -> Result<Transcript, OracleError> {
        (**self).transcribe(clip)
    }
}

fn default_timeout() -> f64 {
    30.0
}

/// How to reach a transcriber. Serialized as `{"kind": "...", ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TranscriberBinding {
    /// Runs `command` per clip; `{input}` is replaced by a temporary WAV path
    /// and the transcript is read from stdout.
    Subprocess { command: String },
    /// POSTs WAV bytes to `url`; expects `{"text": "..."}`.
    Http {
        url: String,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
    /// The bundled toy recognizer.
    Toy {
        #[serde(default = "ToyAsr::default_edges")]
        edges: [f64; 3],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vocabulary: Option<PathBuf>,
    },
}

impl Default for TranscriberBinding {
    fn default() -> Self {
        Self::toy()
    }
}

impl TranscriberBinding {
    pub fn toy() -> Self {
        Self::Toy {
            edges: ToyAsr::DEFAULT_EDGES,
            vocabulary: None,
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        match self {
            Self::Subprocess { command } => {
                let n = command.matches(INPUT_PLACEHOLDER).count();
                if n != 1 {
                    return Err(OracleError::Binding(format!(
                        "subprocess command must contain `{INPUT_PLACEHOLDER}` exactly once, found {n}"
                    )));
                }
                if command.split_whitespace().next().is_none() {
                    return Err(OracleError::Binding("empty subprocess command".into()));
                }
            }
            Self::Http { timeout_secs, .. } => {
                if !(timeout_secs.is_finite() && *timeout_secs > 0.0) {
                    return Err(OracleError::Binding("http timeout must be positive".into()));
                }
            }
            Self::Toy { edges, .. } => {
                if !(0.0 < edges[0] && edges[0] < edges[1] && edges[1] < edges[2]) {
                    return Err(OracleError::Binding(
                        "toy bin edges must be positive and strictly increasing".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Instantiates the transcriber this binding describes.
    pub fn build(&self) -> Result<Box<dyn Transcriber>, OracleError> {
        self.validate()?;
        match self {
            Self::Toy { edges, vocabulary } => {
                let vocab = match vocabulary {
                    Some(path) => ToyVocabulary::load(path)?,
                    None => ToyVocabulary::default(),
                };
                Ok(Box::new(ToyAsr::new(*edges, vocab)))
            }
            #[cfg(feature = "external-oracles")]
            Self::Subprocess { command } => Ok(Box::new(external::SubprocessTranscriber::new(command))),
            #[cfg(feature = "external-oracles")]
            Self::Http { url, timeout_secs } => Ok(Box::new(external::HttpTranscriber::new(
                url,
                std::time::Duration::from_secs_f64(*timeout_secs),
            ))),
            #[cfg(not(feature = "external-oracles"))]
            Self::Subprocess { .. } => Err(OracleError::Unavailable("subprocess")),
            #[cfg(not(feature = "external-oracles"))]
            Self::Http { .. } => Err(OracleError::Unavailable("http")),
        }
    }
}

/// Word table for the toy recognizer, keyed by `(energy bin, length bucket)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyVocabulary {
    words: HashMap<(u8, u8), String>,
}

const DEFAULT_VOCABULARY: &str = "\
1 0 the
1 1 one
1 2 you
2 0 are
2 1 money
2 2 blocking
3 0 of
3 1 locking
3 2 mind
";

impl Default for ToyVocabulary {
    fn default() -> Self {
        Self::parse(DEFAULT_VOCABULARY).expect("built-in vocabulary parses")
    }
}

impl ToyVocabulary {
    /// Parses one `bin length_bucket word` entry per line; blank lines and
    /// `#` comments are skipped.
    pub fn parse(table: &str) -> Result<Self, OracleError> {
        let mut words = HashMap::new();
        for (n, line) in table.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || OracleError::Binding(format!("vocabulary line {}: `{line}`", n + 1));
            let mut parts = line.split_whitespace();
            let bin: u8 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let bucket: u8 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let word = parts.next().ok_or_else(bad)?;
            if parts.next().is_some() || !(1..=3).contains(&bin) || bucket > 2 {
                return Err(bad());
            }
            words.insert((bin, bucket), word.to_owned());
        }
        Ok(Self { words })
    }

    pub fn load(path: &Path) -> Result<Self, OracleError> {
        let table = std::fs::read_to_string(path).map_err(|source| OracleError::Vocabulary {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&table)
    }

    /// Word for a token; unlisted tokens spell themselves out.
    pub fn word(&self, bin: u8, bucket: u8) -> String {
        self.words
            .get(&(bin, bucket))
            .cloned()
            .unwrap_or_else(|| format!("tok{bin}x{bucket}"))
    }

    /// All words the vocabulary can emit.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.values().map(String::as_str)
    }
}

/// Energy-run recognizer: RMS of 100 ms windows, quantized into four bins,
/// run-length encoded, each `(bin, length bucket)` run emitting one word.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyAsr {
    edges: [f64; 3],
    vocab: ToyVocabulary,
}

impl Default for ToyAsr {
    fn default() -> Self {
        Self::new(Self::DEFAULT_EDGES, ToyVocabulary::default())
    }
}

impl ToyAsr {
    pub const DEFAULT_EDGES: [f64; 3] = [0.02, 0.1, 0.3];
    pub const WINDOW_SECS: f64 = 0.1;

    fn default_edges() -> [f64; 3] {
        Self::DEFAULT_EDGES
    }

    pub fn new(edges: [f64; 3], vocab: ToyVocabulary) -> Self {
        Self { edges, vocab }
    }

    pub fn vocabulary(&self) -> &ToyVocabulary {
        &self.vocab
    }

    /// RMS energy bin of every window; a trailing partial window counts.
    pub fn energy_bins(&self, clip: &AudioClip) -> Vec<u8> {
        let len = ((clip.sample_rate() as f64 * Self::WINDOW_SECS).round() as usize).max(1);
        clip.samples()
            .chunks(len)
            .map(|w| {
                let rms = (w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64).sqrt();
                self.edges.iter().take_while(|&&e| rms >= e).count() as u8
            })
            .collect()
    }

    pub fn length_bucket(run: usize) -> u8 {
        match run {
            0 | 1 => 0,
            2 | 3 => 1,
            _ => 2,
        }
    }

    pub fn recognize(&self, clip: &AudioClip) -> Transcript {
        let bins = self.energy_bins(clip);
        let mut words = Vec::new();
        let mut i = 0;
        while i < bins.len() {
            let bin = bins[i];
            let run = bins[i..].iter().take_while(|&&b| b == bin).count();
            if bin > 0 {
                words.push(self.vocab.word(bin, Self::length_bucket(run)));
            }
            i += run;
        }
        normalize(&words.join(" "))
    }
}

impl Transcriber for ToyAsr {
    fn transcribe(&self, clip: &AudioClip) -> Result<Transcript, OracleError> {
        Ok(self.recognize(clip))
    }
}

/// Convenience free function over a binding.
pub fn transcribe(clip: &AudioClip, binding: &TranscriberBinding) -> Result<Transcript, OracleError> {
    binding.build()?.transcribe(clip)
}

#[cfg(feature = "external-oracles")]
mod external {
    use std::io::Read;
    use std::process::Command;
    use std::time::Duration;

    use super::*;

    #[derive(Debug)]
    pub struct SubprocessTranscriber {
        argv: Vec<String>,
    }

    impl SubprocessTranscriber {
        pub fn new(command: &str) -> Self {
            Self {
                argv: command.split_whitespace().map(str::to_owned).collect(),
            }
        }
    }

    impl Transcriber for SubprocessTranscriber {
        fn transcribe(&self, clip: &AudioClip) -> Result<Transcript, OracleError> {
            let file = tempfile::Builder::new()
                .prefix("evoattack-")
                .suffix(".wav")
                .tempfile()?;
            crate::audio::save_wav(clip, file.path())?;
            let path = file.path().to_string_lossy();
            let args: Vec<String> = self.argv[1..]
                .iter()
                .map(|a| a.replace(INPUT_PLACEHOLDER, &path))
                .collect();
            let program = self.argv[0].replace(INPUT_PLACEHOLDER, &path);
            let output = Command::new(program)
                .args(&args)
                .output()
                .map_err(OracleError::Spawn)?;
            if !output.status.success() {
                return Err(OracleError::Exit {
                    status: output.status.to_string(),
                    stderr: String::from_utf8_lossy(&output.stderr).trim().to_owned(),
                });
            }
            let text = String::from_utf8(output.stdout)
                .map_err(|e| OracleError::Malformed(format!("stdout is not UTF-8: {e}")))?;
            Ok(normalize(text.trim()))
        }
    }

    #[derive(Debug, Deserialize)]
    struct HttpResponse {
        text: String,
    }

    pub struct HttpTranscriber {
        url: String,
        agent: ureq::Agent,
    }

    impl HttpTranscriber {
        pub fn new(url: &str, timeout: Duration) -> Self {
            let agent = ureq::Agent::config_builder()
                .timeout_global(Some(timeout))
                .build()
                .into();
            Self {
                url: url.to_owned(),
                agent,
            }
        }
    }

    impl Transcriber for HttpTranscriber {
        fn transcribe(&self, clip: &AudioClip) -> Result<Transcript, OracleError> {
            let body = clip.to_wav_bytes()?;
            let response = self
                .agent
                .post(&self.url)
                .header("Content-Type", "audio/wav")
                .send(&body[..])
                .map_err(|e| match e {
                    ureq::Error::StatusCode(code) => OracleError::Status(code),
                    ureq::Error::Timeout(_) => OracleError::Timeout,
                    ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => OracleError::Timeout,
                    other => OracleError::Transport(other.to_string()),
                })?;
            let mut raw = String::new();
            response
                .into_body()
                .into_reader()
                .read_to_string(&mut raw)
                .map_err(|e| OracleError::Malformed(e.to_string()))?;
            let parsed: HttpResponse =
                serde_json::from_str(&raw).map_err(|e| OracleError::Malformed(e.to_string()))?;
            Ok(normalize(&parsed.text))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 100 ms windows of constant-magnitude square waves with the given RMS.
    fn windows(rms: &[f64]) -> AudioClip {
        let samples = rms
            .iter()
            .flat_map(|&r| (0..1600).map(move |i| if i % 2 == 0 { r } else { -r }))
            .collect();
        AudioClip::new(samples, 16_000).unwrap()
    }

    #[test]
    fn silence_transcribes_to_nothing() {
        let asr = ToyAsr::default();
        let clip = AudioClip::new(vec![0.0; 16_000], 16_000).unwrap();
        assert!(asr.transcribe(&clip).unwrap().is_empty());
        assert!(transcribe(&clip, &TranscriberBinding::toy()).unwrap().is_empty());
    }

    #[test]
    fn constant_run_is_one_word() {
        let clip = AudioClip::new(vec![0.5; 4800], 16_000).unwrap();
        let t = ToyAsr::default().recognize(&clip);
        assert_eq!(t.words(), ["locking"]);
        assert_eq!(ToyAsr::default().energy_bins(&clip), vec![3, 3, 3]);
    }

    #[test]
    fn deterministic() {
        let clip = windows(&[0.05, 0.2, 0.2, 0.0, 0.5]);
        let asr = ToyAsr::default();
        assert_eq!(asr.recognize(&clip), asr.recognize(&clip.clone()));
        assert_eq!(asr.recognize(&clip).words(), ["the", "money", "of"]);
    }

    #[test]
    fn crossing_a_bin_edge_changes_only_that_run() {
        let asr = ToyAsr::default();
        let before = asr.recognize(&windows(&[0.05, 0.0, 0.099, 0.0, 0.5]));
        let after = asr.recognize(&windows(&[0.05, 0.0, 0.101, 0.0, 0.5]));
        assert_eq!(before.words(), ["the", "the", "of"]);
        assert_eq!(after.words(), ["the", "are", "of"]);
    }

    #[test]
    fn small_perturbation_flips_transcript_with_high_correlation() {
        let clip = windows(&[0.0995; 10]);
        let bumped: Vec<f64> = clip.samples().iter().map(|x| x * 1.01).collect();
        let bumped = AudioClip::new(bumped, 16_000).unwrap();
        let asr = ToyAsr::default();
        assert_ne!(asr.recognize(&clip), asr.recognize(&bumped));
        let cc = crate::features::correlation_coefficient(&clip, &bumped).unwrap();
        assert!(cc >= 0.9);
    }

    #[test]
    fn length_buckets() {
        assert_eq!(
            [1, 2, 3, 4, 9].map(ToyAsr::length_bucket),
            [0, 1, 1, 2, 2]
        );
    }

    #[test]
    fn vocabulary_parsing() {
        let v = ToyVocabulary::parse("# words\n1 0 hello\n\n2 2 world\n").unwrap();
        assert_eq!(v.word(1, 0), "hello");
        assert_eq!(v.word(3, 1), "tok3x1");
        assert!(ToyVocabulary::parse("4 0 nope").is_err());
        assert!(ToyVocabulary::parse("1 x nope").is_err());
        assert!(ToyVocabulary::parse("1 0 two words").is_err());
    }

    #[test]
    fn binding_validation() {
        let ok = TranscriberBinding::Subprocess { command: "asr --audio {input}".into() };
        assert!(ok.validate().is_ok());
        let none = TranscriberBinding::Subprocess { command: "asr".into() };
        assert!(none.validate().is_err());
        let twice = TranscriberBinding::Subprocess { command: "asr {input} {input}".into() };
        assert!(twice.validate().is_err());
        let http = TranscriberBinding::Http { url: "http://x".into(), timeout_secs: 0.0 };
        assert!(http.validate().is_err());
        let toy = TranscriberBinding::Toy { edges: [0.1, 0.05, 0.3], vocabulary: None };
        assert!(toy.validate().is_err());
    }

    #[test]
    fn binding_json_shape() {
        let b: TranscriberBinding = serde_json::from_str(r#"{"kind":"toy"}"#).unwrap();
        assert_eq!(b, TranscriberBinding::toy());
        let b: TranscriberBinding =
            serde_json::from_str(r#"{"kind":"http","url":"http://127.0.0.1:9/asr"}"#).unwrap();
        assert_eq!(b, TranscriberBinding::Http { url: "http://127.0.0.1:9/asr".into(), timeout_secs: 30.0 });
        let b: TranscriberBinding =
            serde_json::from_str(r#"{"kind":"subprocess","command":"deepspeech --audio {input}"}"#).unwrap();
        assert!(matches!(b, TranscriberBinding::Subprocess { .. }));
    }
}
