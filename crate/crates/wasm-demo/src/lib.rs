//! Browser bindings. Each export returns a JSON string; failures come back as
//! `{"error": "..."}` so the page never has to catch exceptions.

use evoattack::benchmarks::{schaffer, tone_segments};
use evoattack::operators::{GeneBounds, MutationConfig, SelectionConfig};
use evoattack::{
    compute_mfcc, correlation_coefficient, evolve, pareto_snapshot, run_attack, Algorithm,
    AttackConfig, AudioClip, Individual, MfccConfig, ToyAsr,
};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const SAMPLE_RATE: u32 = 16_000;

fn respond(result: Result<Value, String>) -> String {
    result.unwrap_or_else(|e| json!({ "error": e })).to_string()
}

fn algorithm(name: &str) -> Result<Algorithm, String> {
    match name {
        "moga" => Ok(Algorithm::Moga),
        "nsga2" => Ok(Algorithm::Nsga2),
        other => Err(format!("unknown algorithm {other:?}")),
    }
}

pub fn schaffer_run(algo: &str, seed: u64, generations: usize) -> Result<Value, String> {
    let params = evoattack::EvolutionParams {
        algorithm: algorithm(algo)?,
        survivor_count: 30,
        max_iters: generations.clamp(1, 200),
        mutation: MutationConfig { prob_m: 1.0, sigma: 0.05 },
        selection: SelectionConfig { elite_count: 10, ..Default::default() },
        bounds: GeneBounds { lo: -4.0, hi: 4.0 },
        seed,
        ..Default::default()
    };
    // Spread over the whole domain; the seed drives selection and mutation.
    let initial = (0..30).map(|i| Individual::new(vec![-4.0 + 8.0 * i as f64 / 29.0])).collect();
    let evo = evolve(initial, &params, &schaffer, &mut |_| Ok(())).map_err(|e| e.to_string())?;
    Ok(json!({
        "history": evo.history,
        "front": pareto_snapshot(&evo.population),
        "converged": evo.converged,
    }))
}

fn tone(frequency: f64, amplitude: f64, secs: f64) -> Result<AudioClip, String> {
    if !(frequency > 0.0 && frequency < SAMPLE_RATE as f64 / 2.0) {
        return Err("frequency must be between 0 and 8000 Hz".into());
    }
    let n = (secs * SAMPLE_RATE as f64) as usize;
    let samples = (0..n)
        .map(|i| amplitude * (2.0 * std::f64::consts::PI * frequency * i as f64 / SAMPLE_RATE as f64).sin())
        .collect();
    AudioClip::from_unclamped(samples, SAMPLE_RATE).map_err(|e| e.to_string())
}

pub fn tone_mfcc(frequency: f64, amplitude: f64) -> Result<Value, String> {
    let m = compute_mfcc(&tone(frequency, amplitude, 0.5)?, &MfccConfig::default()).map_err(|e| e.to_string())?;
    Ok(json!({
        "frames": m.frame_count(),
        "coefficients": m.coeff_count(),
        "data": m.as_slice(),
    }))
}

/// A short toy-recognizer attack on a fixed five-level utterance.
pub fn toy_attack(seed: u64, generations: usize) -> Result<Value, String> {
    let a = 0.1 - 1e-6;
    let original = tone_segments(&[(a, 2), (0.0, 1), (0.3 - 1e-6, 1), (0.0, 1), (a, 3)], SAMPLE_RATE);
    let cfg = AttackConfig {
        population_size: 30,
        survivor_count: 15,
        max_iters: generations.clamp(1, 30),
        selection: SelectionConfig { elite_count: 5, ..Default::default() },
        seed,
        parallelism: 1,
        ..Default::default()
    };
    let asr = ToyAsr::default();
    let out = run_attack(&original, &cfg, &asr).map_err(|e| e.to_string())?;
    let cc = correlation_coefficient(&original, &out.best_clip).map_err(|e| e.to_string())?;
    Ok(json!({
        "original_transcript": out.original_transcript.to_string(),
        "best_transcript": out.best.transcript.map(|t| t.to_string()),
        "best_objectives": out.best.objectives,
        "cc": cc,
        "history": out.history,
        "converged": out.converged,
        "oracle_calls": out.oracle_calls,
    }))
}

/// Runs MOGA (`"moga"`) or NSGA-II (`"nsga2"`) on Schaffer's problem.
#[wasm_bindgen(js_name = schafferRun)]
pub fn schaffer_run_js(algorithm: &str, seed: u32, generations: u32) -> String {
    respond(schaffer_run(algorithm, seed.into(), generations as usize))
}

/// MFCC matrix of a 0.5 s sine tone, row-major by frame.
#[wasm_bindgen(js_name = toneMfcc)]
pub fn tone_mfcc_js(frequency: f64, amplitude: f64) -> String {
    respond(tone_mfcc(frequency, amplitude))
}

#[wasm_bindgen(js_name = toyAttack)]
pub fn toy_attack_js(seed: u32, generations: u32) -> String {
    respond(toy_attack(seed.into(), generations as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schaffer_front_lies_on_the_pareto_set() {
        for algo in ["moga", "nsga2"] {
            let v = schaffer_run(algo, 3, 40).unwrap();
            let front = v["front"].as_array().unwrap();
            assert!(!front.is_empty());
            for p in front {
                let (f1, f2) = (p[0].as_f64().unwrap(), p[1].as_f64().unwrap());
                let gap = evoattack::benchmarks::schaffer_front_gap(f1, f2);
                assert!(gap < 1e-2, "{algo}: ({f1}, {f2}) gap {gap}");
                assert!(f1 <= 4.5 && f2 <= 4.5, "{algo}: ({f1}, {f2})");
            }
        }
        assert!(schaffer_run("spea2", 0, 5).is_err());
    }

    #[test]
    fn mfcc_shape() {
        let v = tone_mfcc(440.0, 0.5).unwrap();
        assert_eq!(v["frames"], 48);
        assert_eq!(v["coefficients"], 13);
        assert_eq!(v["data"].as_array().unwrap().len(), 48 * 13);
        assert!(respond(tone_mfcc(9000.0, 0.5)).contains("error"));
    }

    #[test]
    fn toy_attack_reports_history() {
        let v = toy_attack(1, 3).unwrap();
        assert_eq!(v["original_transcript"], "one are one");
        let history = v["history"].as_array().unwrap();
        assert!(!history.is_empty() && history.len() <= 4);
        assert!(v["cc"].as_f64().unwrap() > 0.9);
        let text = toy_attack_js(1, 3);
        assert_eq!(serde_json::from_str::<Value>(&text).unwrap(), v);
    }
}
