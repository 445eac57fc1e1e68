//! Closed-form test problems for validating the evolutionary loop.

use crate::audio::AudioClip;
use crate::engine::Evaluation;
use crate::moea::ObjectiveVector;
use crate::oracle::OracleError;

/// Schaffer's problem N.1: `(x², (x − 2)²)` over a scalar genome. The
/// Pareto set is `x ∈ [0, 2]`, where `f2 = (√f1 − 2)²`.
pub fn schaffer(genome: &[f64]) -> Result<Evaluation, OracleError> {
    let x = genome[0];
    Ok(Evaluation {
        objectives: ObjectiveVector::from([x * x, (x - 2.0) * (x - 2.0)]),
        transcript: None,
    })
}

/// Distance of `(f1, f2)` from the analytic Schaffer front.
pub fn schaffer_front_gap(f1: f64, f2: f64) -> f64 {
    (f2 - (f1.sqrt() - 2.0).powi(2)).abs()
}

/// ZDT1 over `genome ∈ [0, 1]^n`, `n ≥ 2`.
pub fn zdt1(genome: &[f64]) -> Result<Evaluation, OracleError> {
    let f1 = genome[0];
    let n = genome.len();
    let g = 1.0 + 9.0 * genome[1..].iter().sum::<f64>() / (n - 1) as f64;
    let f2 = g * (1.0 - (f1 / g).sqrt());
    Ok(Evaluation {
        objectives: ObjectiveVector::from([f1, f2]),
        transcript: None,
    })
}

/// Synthetic "utterance" of 440 Hz tone segments. Each `(rms, windows)` entry
/// lasts `windows` × 100 ms at the given RMS level; 440 Hz completes whole
/// cycles in every 100 ms window, so per-window RMS is exact.
pub fn tone_segments(segments: &[(f64, usize)], sample_rate: u32) -> AudioClip {
    let window = (sample_rate / 10) as usize;
    let mut samples = Vec::new();
    for &(rms, windows) in segments {
        let amp = rms * std::f64::consts::SQRT_2;
        let start = samples.len();
        samples.extend((0..windows * window).map(|i| {
            let t = (start + i) as f64 / sample_rate as f64;
            amp * (2.0 * std::f64::consts::PI * 440.0 * t).sin()
        }));
    }
    AudioClip::from_unclamped(samples, sample_rate).expect("segments are non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schaffer_values() {
        let e = schaffer(&[1.0]).unwrap();
        assert_eq!(e.objectives.values(), &[1.0, 1.0]);
        assert_eq!(schaffer_front_gap(1.0, 1.0), 0.0);
        assert!(schaffer_front_gap(1.0, 9.0) > 1.0);
    }

    #[test]
    fn tone_segments_hit_requested_rms() {
        let clip = tone_segments(&[(0.05, 2), (0.2, 1)], 16_000);
        assert_eq!(clip.len(), 4800);
        for (w, want) in clip.samples().chunks(1600).zip([0.05, 0.05, 0.2]) {
            let rms = (w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64).sqrt();
            assert!((rms - want).abs() < 1e-6, "{rms} vs {want}");
        }
    }

    #[test]
    fn zdt1_front_at_zero_tail() {
        let e = zdt1(&[0.25, 0.0, 0.0]).unwrap();
        assert_eq!(e.objectives.values(), &[0.25, 0.5]);
    }
}
