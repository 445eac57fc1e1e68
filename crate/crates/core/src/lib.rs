//! Black-box adversarial audio generation with multi-objective evolutionary
//! search.
//!
//! A candidate adversarial example is a waveform (one gene per sample). Each
//! candidate is scored on two minimized objectives: the Euclidean distance
//! between its MFCCs and the original's, and a word edit distance computed
//! from a black-box recognizer's transcript (negated for un-targeted attacks,
//! measured against the target phrase for targeted ones). MOGA and NSGA-II
//! drive the search through the same [`engine::evolve`] loop.

pub mod audio;
pub mod benchmarks;
pub mod engine;
pub mod features;
pub mod moea;
pub mod operators;
pub mod oracle;
pub mod rng;
pub mod text;

pub use audio::{clamp, load_wav, save_wav, AudioClip, AudioError};
pub use engine::{
    evaluate_fitness, evolve, pareto_snapshot, run_attack, run_attack_with, Algorithm,
    AttackConfig, AttackMode, AttackOutcome, EngineError, Evaluation, Evolution,
    EvolutionParams, Fitness, GenerationRecord,
};
pub use features::{compute_mfcc, correlation_coefficient, mfcc_distance, MfccConfig, MfccMatrix};
pub use moea::{
    crowding_distance, dominance_count_rank, dominates, fast_nondominated_sort, Individual,
    ObjectiveVector, RankedPopulation,
};
pub use oracle::{ToyAsr, Transcriber, TranscriberBinding};
pub use text::{normalize, wer, wer_report, word_edit_distance, Transcript, WerReport};
