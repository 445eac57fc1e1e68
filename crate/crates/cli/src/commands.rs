//! The `attack`, `evaluate` and `transfer` commands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use evoattack::oracle::Transcriber;
use evoattack::rng::{derive_seed, stream};
use evoattack::{
    correlation_coefficient, load_wav, run_attack_with, save_wav, wer_report, word_edit_distance, AttackMode,
    AudioClip, GenerationRecord, TranscriberBinding, Transcript,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::manifest::{EvaluationMeans, EvaluationReport, EvaluationRow, RunManifest, SampleEntry};
use crate::target::{choose_target, read_corpus};
use crate::HarnessError;

pub const MANIFEST_FILE: &str = "manifest.json";
const STREAM_TARGET: u64 = 16;

/// What `attack` wrote.
#[derive(Debug, Clone)]
pub struct AttackRun {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
}

/// `input` itself, or the `.wav` files directly inside it in name order.
pub fn list_inputs(input: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let meta = std::fs::metadata(input).map_err(HarnessError::io(input))?;
    if !meta.is_dir() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(input).map_err(HarnessError::io(input))? {
        let path = entry.map_err(HarnessError::io(input))?.path();
        let is_wav = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if is_wav && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn write_line(out: &mut impl Write, value: &impl Serialize) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    out.flush()
}

fn attack_one(
    cfg: &RunConfig,
    corpus: Option<&[Transcript]>,
    transcriber: &dyn Transcriber,
    input: &Path,
    index: usize,
    out_dir: &Path,
) -> SampleEntry {
    let seed = derive_seed(cfg.attack.seed, index as u64);
    let targeted = matches!(cfg.attack.mode, AttackMode::Targeted { .. });
    let absolute = std::path::absolute(input).unwrap_or_else(|_| input.to_path_buf());
    let mut entry = SampleEntry::new(absolute, seed, if targeted { "targeted" } else { "untargeted" });
    if let Err(e) = attack_into(cfg, corpus, transcriber, input, seed, out_dir, &mut entry) {
        log::error!("{}: {e}", input.display());
        entry.error = Some(e.to_string());
    }
    entry
}

fn attack_into(
    cfg: &RunConfig,
    corpus: Option<&[Transcript]>,
    transcriber: &dyn Transcriber,
    input: &Path,
    seed: u64,
    out_dir: &Path,
    entry: &mut SampleEntry,
) -> Result<(), HarnessError> {
    let original = load_wav(input)?;
    let target = match corpus {
        Some(phrases) => {
            let n = transcriber.transcribe(&original)?.len();
            Some(choose_target(phrases, n, &mut stream(seed, STREAM_TARGET, 0, 0))?)
        }
        None => None,
    };
    let attack = cfg.for_sample(seed, target);
    attack.validate()?;
    if let AttackMode::Targeted { target_text } = &attack.mode {
        entry.target = Some(target_text.clone());
    }

    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("sample");
    let history_name = PathBuf::from(format!("{stem}.history.jsonl"));
    let history_path = out_dir.join(&history_name);
    let mut log = BufWriter::new(File::create(&history_path).map_err(HarnessError::io(&history_path))?);
    entry.history = Some(history_name);
    let mut observer = |rec: &GenerationRecord| write_line(&mut log, rec);
    let outcome = run_attack_with(&original, &attack, transcriber, &mut observer)?;

    let best_transcript = outcome.best.transcript.clone().unwrap_or_default();
    write_line(
        &mut log,
        &serde_json::json!({
            "summary": {
                "original_transcript": &outcome.original_transcript,
                "target": entry.target.as_ref(),
                "best": {
                    "objectives": &outcome.best.objectives,
                    "transcript": &outcome.best.transcript,
                },
                "generations": outcome.history.len(),
                "converged": outcome.converged,
                "oracle_calls": outcome.oracle_calls,
            }
        }),
    )
    .map_err(HarnessError::io(&history_path))?;

    let output_name = PathBuf::from(format!("{stem}.adv.wav"));
    save_wav(&outcome.best_clip, out_dir.join(&output_name))?;
    entry.output = Some(output_name);

    let report = wer_report(&outcome.original_transcript, &best_transcript);
    entry.edit_distance_to_original = Some(report.edits as usize);
    entry.normalized_wer = report.normalized;
    entry.edit_distance_to_target = entry.target.as_ref().map(|t| word_edit_distance(t, &best_transcript));
    entry.cc = correlation_coefficient(&original, &outcome.best_clip).ok();
    entry.original_transcript = Some(outcome.original_transcript);
    entry.transcript = Some(best_transcript);
    entry.objectives = outcome.best.objectives;
    entry.generations = Some(outcome.history.len());
    entry.converged = Some(outcome.converged);
    entry.oracle_calls = Some(outcome.oracle_calls);
    Ok(())
}

/// Attacks every input in turn, writing `<stem>.adv.wav`,
/// `<stem>.history.jsonl` and a `manifest.json` into `out_dir`. Per-sample
/// failures land in the manifest; only config and output-directory problems
/// are errors.
pub fn attack_command(config_path: &Path, input: &Path, out_dir: &Path) -> Result<AttackRun, HarnessError> {
    let cfg = RunConfig::load(config_path)?;
    let inputs = list_inputs(input)?;
    std::fs::create_dir_all(out_dir).map_err(HarnessError::io(out_dir))?;
    let corpus = cfg.target_corpus.as_deref().map(read_corpus).transpose()?;
    let transcriber = cfg.oracle.build()?;

    let mut warnings = Vec::new();
    if inputs.is_empty() {
        let msg = format!("no .wav files in {}", input.display());
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let mut samples = Vec::with_capacity(inputs.len());
    for (i, path) in inputs.iter().enumerate() {
        log::info!("attacking {} ({}/{})", path.display(), i + 1, inputs.len());
        samples.push(attack_one(&cfg, corpus.as_deref(), transcriber.as_ref(), path, i, out_dir));
    }

    let manifest = RunManifest::new(cfg.oracle.clone(), samples, warnings);
    let manifest_path = out_dir.join(MANIFEST_FILE);
    manifest.save(&manifest_path)?;
    Ok(AttackRun { manifest, manifest_path })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

/// Scores one pair: the oracle's transcripts of both clips against `reference`.
pub fn evaluate_pair(
    transcriber: &dyn Transcriber,
    original_path: &Path,
    adversarial_path: &Path,
    reference: &Transcript,
) -> EvaluationRow {
    let mut row = EvaluationRow {
        original: original_path.to_path_buf(),
        adversarial: adversarial_path.to_path_buf(),
        reference: reference.clone(),
        original_hypothesis: None,
        original_edit_distance: None,
        hypothesis: None,
        edit_distance: None,
        normalized_wer: None,
        cc: None,
        cc_skipped: None,
        error: None,
    };
    let result = (|| -> Result<(), HarnessError> {
        let adversarial = load_wav(adversarial_path)?;
        let hyp = transcriber.transcribe(&adversarial)?;
        let report = wer_report(reference, &hyp);
        row.edit_distance = Some(report.edits as usize);
        row.normalized_wer = report.normalized;
        row.hypothesis = Some(hyp);
        let original = load_wav(original_path)?;
        let orig_hyp = transcriber.transcribe(&original)?;
        row.original_edit_distance = Some(word_edit_distance(reference, &orig_hyp));
        row.original_hypothesis = Some(orig_hyp);
        match cc_between(&original, &adversarial) {
            Ok(cc) => row.cc = Some(cc),
            Err(reason) => row.cc_skipped = Some(reason),
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
    }
    row
}

fn cc_between(a: &AudioClip, b: &AudioClip) -> Result<f64, String> {
    if a.len() != b.len() {
        return Err(format!("length mismatch: {} vs {} samples", a.len(), b.len()));
    }
    correlation_coefficient(a, b).map_err(|e| e.to_string())
}

fn score_manifest(manifest_path: &Path, binding: &TranscriberBinding) -> Result<EvaluationReport, HarnessError> {
    let manifest = RunManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let transcriber = binding.build()?;
    let mut rows = Vec::new();
    for sample in &manifest.samples {
        let (Some(output), Some(reference)) = (&sample.output, &sample.original_transcript) else {
            log::warn!("{}: no adversarial output in manifest, skipped", sample.input.display());
            continue;
        };
        let input = resolve(base, &sample.input);
        rows.push(evaluate_pair(transcriber.as_ref(), &input, &resolve(base, output), reference));
    }
    let means = EvaluationMeans::of(&rows);
    Ok(EvaluationReport { oracle: binding.clone(), rows, means })
}

/// Re-scores a manifest's pairs with `binding`, using each sample's original
/// transcript as the reference.
pub fn evaluate_command(manifest_path: &Path, binding: &TranscriberBinding) -> Result<EvaluationReport, HarnessError> {
    score_manifest(manifest_path, binding)
}

/// Tests samples made against one oracle on another: the same scoring as
/// [`evaluate_command`], with `binding` standing in for the other system.
pub fn transfer_command(manifest_path: &Path, binding: &TranscriberBinding) -> Result<EvaluationReport, HarnessError> {
    score_manifest(manifest_path, binding)
}

#[cfg(test)]
mod tests {
    use super::*;
    use evoattack::benchmarks::tone_segments;

    #[test]
    fn lists_wavs_in_name_order() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.wav", "a.WAV", "notes.txt"] {
            std::fs::write(dir.path().join(name), b"").unwrap();
        }
        std::fs::create_dir(dir.path().join("sub.wav")).unwrap();
        let names: Vec<_> = list_inputs(dir.path())
            .unwrap()
            .iter()
            .map(|p| p.file_name().unwrap().to_str().unwrap().to_owned())
            .collect();
        assert_eq!(names, ["a.WAV", "b.wav"]);
        let single = dir.path().join("b.wav");
        assert_eq!(list_inputs(&single).unwrap(), vec![single]);
        assert!(list_inputs(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn self_pair_has_unit_cc() {
        let dir = tempfile::tempdir().unwrap();
        let clip = tone_segments(&[(0.2, 2), (0.0, 1), (0.05, 1)], 16_000);
        let path = dir.path().join("x.wav");
        save_wav(&clip, &path).unwrap();
        let asr = evoattack::ToyAsr::default();
        let reference = Transcript::from("money the you");
        let row = evaluate_pair(&asr, &path, &path, &reference);
        assert_eq!(row.cc, Some(1.0));
        assert_eq!(row.edit_distance, row.original_edit_distance);
        assert_eq!(row.hypothesis.as_ref().unwrap().text(), "money the");
        assert_eq!(row.edit_distance, Some(1));
    }

    #[test]
    fn length_mismatch_skips_cc_only() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.wav");
        let b = dir.path().join("b.wav");
        save_wav(&tone_segments(&[(0.2, 2)], 16_000), &a).unwrap();
        save_wav(&tone_segments(&[(0.2, 3)], 16_000), &b).unwrap();
        let row = evaluate_pair(&evoattack::ToyAsr::default(), &a, &b, &Transcript::from("money"));
        assert_eq!(row.cc, None);
        assert!(row.cc_skipped.unwrap().contains("length mismatch"));
        assert_eq!(row.edit_distance, Some(0));
        assert!(row.error.is_none());
    }
}
