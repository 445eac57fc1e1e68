//! The evolutionary loop shared by MOGA and NSGA-II, and the attack built on it.
//!
//! Generation 0 is the initial population. Each iteration breeds one more
//! generation: mating pool, three children per pair, mutation of every child,
//! evaluation, then survival of the pooled parents and children. The run stops
//! after `max_iters` iterations, or as soon as two successive survivor
//! generations (generation 1 onward) have byte-identical front-0 genome sets.

use std::collections::{BTreeSet, HashMap};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio::AudioClip;
use crate::features::{FeatureError, MfccConfig, MfccExtractor, MfccMatrix};
use crate::moea::{Individual, MoeaError, ObjectiveVector, RankedPopulation};
use crate::operators::{
    self, GeneBounds, MutationConfig, OperatorError, SelectionConfig,
};
use crate::oracle::{OracleError, Transcriber};
use crate::rng;
use crate::text::{word_edit_distance, Transcript};

const STREAM_INIT: u64 = 1;
const STREAM_SELECT: u64 = 2;
const STREAM_MUTATE: u64 = 3;
const STREAM_PICK: u64 = 4;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("oracle failed on individual {index} of generation {generation}: {source}")]
    Oracle {
        generation: usize,
        index: usize,
        #[source]
        source: OracleError,
    },
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Moea(#[from] MoeaError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("history sink failed: {0}")]
    Sink(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Moga,
    Nsga2,
}

/// Result of evaluating one genome.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objectives: ObjectiveVector,
    pub transcript: Option<Transcript>,
}

/// Maps a genome to its objective vector; the only problem-specific piece.
pub trait Fitness: Sync {
    fn evaluate(&self, genome: &[f64]) -> Result<Evaluation, OracleError>;
}

impl<F> Fitness for F
where
    F: Fn(&[f64]) -> Result<Evaluation, OracleError> + Sync,
{
    fn evaluate(&self, genome: &[f64]) -> Result<Evaluation, OracleError> {
        self(genome)
    }
}

/// Knobs of the generic loop.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionParams {
    pub algorithm: Algorithm,
    pub survivor_count: usize,
    pub max_iters: usize,
    pub mutation: MutationConfig,
    pub selection: SelectionConfig,
    pub bounds: GeneBounds,
    pub seed: u64,
    pub parallelism: usize,
    /// Attempts per genome before an oracle failure aborts the run.
    pub max_attempts: usize,
    pub backoff: Duration,
}

impl Default for EvolutionParams {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Moga,
            survivor_count: 30,
            max_iters: 50,
            mutation: MutationConfig::default(),
            selection: SelectionConfig::default(),
            bounds: GeneBounds::AUDIO,
            seed: 0,
            parallelism: 1,
            max_attempts: 3,
            backoff: Duration::from_millis(100),
        }
    }
}

/// The member a generation would report as its answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestMember {
    pub index: usize,
    pub objectives: ObjectiveVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<Transcript>,
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub objectives: Vec<ObjectiveVector>,
    pub front0: Vec<bool>,
    pub best: BestMember,
    /// Cumulative distinct genomes sent to the fitness function.
    pub oracle_calls: usize,
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub best: Individual,
    pub history: Vec<GenerationRecord>,
    pub population: RankedPopulation,
    pub converged: bool,
    pub oracle_calls: usize,
}

type GenomeHash = [u8; 32];

fn genome_hash(genome: &[f64]) -> GenomeHash {
    let mut h = Sha256::new();
    for g in genome {
        h.update(g.to_bits().to_le_bytes());
    }
    h.finalize().into()
}

/// Content-addressed evaluation cache; each distinct genome is evaluated once.
struct EvaluationCache<'f> {
    fitness: &'f dyn Fitness,
    entries: HashMap<GenomeHash, Evaluation>,
    calls: usize,
    parallelism: usize,
    max_attempts: usize,
    backoff: Duration,
}

impl<'f> EvaluationCache<'f> {
    fn evaluate_with_retry(&self, genome: &[f64]) -> Result<Evaluation, OracleError> {
        let mut attempt = 0;
        loop {
            match self.fitness.evaluate(genome) {
                Ok(e) => return Ok(e),
                Err(e) if attempt + 1 >= self.max_attempts.max(1) => return Err(e),
                Err(_) => {
                    std::thread::sleep(self.backoff * 2u32.pow(attempt as u32));
                    attempt += 1;
                }
            }
        }
    }

    fn evaluate(&mut self, members: &mut [Individual], generation: usize) -> Result<(), EngineError> {
        let hashes: Vec<GenomeHash> = members.iter().map(|m| genome_hash(&m.genome)).collect();
        let mut pending: Vec<usize> = Vec::new();
        let mut queued = BTreeSet::new();
        for (i, h) in hashes.iter().enumerate() {
            if !self.entries.contains_key(h) && queued.insert(*h) {
                pending.push(i);
            }
        }

        let results: Vec<Result<Evaluation, OracleError>> = if self.parallelism <= 1 || pending.len() < 2 {
            pending
                .iter()
                .map(|&i| self.evaluate_with_retry(&members[i].genome))
                .collect()
        } else {
            let chunk = pending.len().div_ceil(self.parallelism);
            let this = &*self;
            let members = &*members;
            std::thread::scope(|s| {
                let handles: Vec<_> = pending
                    .chunks(chunk)
                    .map(|idx| {
                        s.spawn(move || {
                            idx.iter()
                                .map(|&i| this.evaluate_with_retry(&members[i].genome))
                                .collect::<Vec<_>>()
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .flat_map(|h| h.join().expect("evaluation worker panicked"))
                    .collect()
            })
        };

        for (&i, result) in pending.iter().zip(results) {
            let evaluation = result.map_err(|source| EngineError::Oracle {
                generation,
                index: i,
                source,
            })?;
            self.calls += 1;
            self.entries.insert(hashes[i], evaluation);
        }
        for (m, h) in members.iter_mut().zip(&hashes) {
            let e = &self.entries[h];
            m.objectives = Some(e.objectives.clone());
            m.transcript = e.transcript.clone();
        }
        Ok(())
    }
}

/// Front-0 objective vectors ordered by objective 1 (ties by objective 2).
pub fn pareto_snapshot(pop: &RankedPopulation) -> Vec<ObjectiveVector> {
    let mut front: Vec<ObjectiveVector> = pop
        .first_front()
        .iter()
        .map(|&i| pop.objectives(i).clone())
        .collect();
    front.sort_by(|a, b| {
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    front
}

fn front_genome_set(pop: &RankedPopulation) -> BTreeSet<GenomeHash> {
    pop.first_front()
        .iter()
        .map(|&i| genome_hash(&pop.members[i].genome))
        .collect()
}

fn pick_best(pop: &RankedPopulation, seed: u64, generation: usize) -> usize {
    let front = pop.first_front();
    let mut r = rng::stream(seed, STREAM_PICK, generation as u64, 0);
    front[r.random_range(0..front.len())]
}

fn record(pop: &RankedPopulation, generation: usize, best: usize, oracle_calls: usize) -> GenerationRecord {
    let mut front0 = vec![false; pop.len()];
    for &i in pop.first_front() {
        front0[i] = true;
    }
    GenerationRecord {
        generation,
        objectives: (0..pop.len()).map(|i| pop.objectives(i).clone()).collect(),
        front0,
        best: BestMember {
            index: best,
            objectives: pop.objectives(best).clone(),
            transcript: pop.members[best].transcript.clone(),
        },
        oracle_calls,
    }
}

fn survive(pool: Vec<Individual>, params: &EvolutionParams) -> Result<Vec<Individual>, EngineError> {
    let n = params.survivor_count.min(pool.len());
    let ranked = RankedPopulation::new(pool)?;
    let take = |ranked: RankedPopulation, order: &[usize], count: usize| -> (Vec<Individual>, Vec<Individual>) {
        let mut slots: Vec<Option<Individual>> = ranked.members.into_iter().map(Some).collect();
        let kept = order[..count].iter().map(|&i| slots[i].take().unwrap()).collect();
        (kept, slots.into_iter().flatten().collect())
    };
    match params.algorithm {
        Algorithm::Moga => {
            let order = ranked.dominance_order();
            Ok(take(ranked, &order, n).0)
        }
        Algorithm::Nsga2 => {
            let k = params.selection.elite_count.min(n);
            let order = ranked.crowded_order();
            let (mut elites, rest) = take(ranked, &order, k);
            if n > k {
                let rest = RankedPopulation::new(rest)?;
                let order = rest.crowded_order();
                elites.extend(take(rest, &order, n - k).0);
            }
            Ok(elites)
        }
    }
}

fn breed(
    pop: &RankedPopulation,
    params: &EvolutionParams,
    generation: usize,
) -> Result<Vec<Individual>, EngineError> {
    let mut r = rng::stream(params.seed, STREAM_SELECT, generation as u64, 0);
    let pairs = match params.algorithm {
        Algorithm::Moga => {
            operators::moga_mating_pool(pop, pop.len(), &params.selection.scheme_mix, &mut r)?
        }
        Algorithm::Nsga2 => operators::nsga2_mating_selection(
            pop,
            pop.len(),
            params.selection.tournament_size,
            &mut r,
        ),
    };
    let mut children = Vec::with_capacity(3 * pairs.len());
    for (k, pair) in pairs.iter().enumerate() {
        let brood = operators::crossover(&pop.members[pair.a], &pop.members[pair.b], params.bounds)?;
        for (j, child) in brood.iter().enumerate() {
            let mut mr = rng::stream(params.seed, STREAM_MUTATE, generation as u64, (3 * k + j) as u64);
            children.push(operators::mutate(child, &params.mutation, params.bounds, &mut mr));
        }
    }
    Ok(children)
}

/// Runs the loop from `initial` until `max_iters` iterations or convergence.
/// `observer` sees each generation record as soon as it exists.
pub fn evolve(
    initial: Vec<Individual>,
    params: &EvolutionParams,
    fitness: &dyn Fitness,
    observer: &mut dyn FnMut(&GenerationRecord) -> std::io::Result<()>,
) -> Result<Evolution, EngineError> {
    if initial.is_empty() {
        return Err(EngineError::Config("initial population is empty".into()));
    }
    if params.survivor_count == 0 || params.max_iters == 0 {
        return Err(EngineError::Config("survivor_count and max_iters must be positive".into()));
    }
    params.mutation.validate()?;
    params.selection.validate(params.survivor_count)?;

    let mut cache = EvaluationCache {
        fitness,
        entries: HashMap::new(),
        calls: 0,
        parallelism: params.parallelism,
        max_attempts: params.max_attempts,
        backoff: params.backoff,
    };
    let mut history = Vec::new();
    let mut members = initial;
    let mut generation = 0;
    cache.evaluate(&mut members, generation)?;
    let mut pop = RankedPopulation::new(members)?;
    let mut best = pick_best(&pop, params.seed, generation);
    let rec = record(&pop, generation, best, cache.calls);
    observer(&rec)?;
    history.push(rec);
    // Generation 0 is unselected and larger, so it never counts toward convergence.
    let mut front_set = None;
    let mut converged = false;

    for _ in 0..params.max_iters {
        generation += 1;
        let mut children = breed(&pop, params, generation)?;
        cache.evaluate(&mut children, generation)?;
        let mut pool = pop.members;
        pool.extend(children);
        pop = RankedPopulation::new(survive(pool, params)?)?;
        best = pick_best(&pop, params.seed, generation);
        let rec = record(&pop, generation, best, cache.calls);
        observer(&rec)?;
        history.push(rec);
        let next_set = front_genome_set(&pop);
        if front_set.as_ref() == Some(&next_set) {
            converged = true;
            break;
        }
        front_set = Some(next_set);
    }

    Ok(Evolution {
        best: pop.members[best].clone(),
        history,
        population: pop,
        converged,
        oracle_calls: cache.calls,
    })
}

/// What the attack optimizes for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum AttackMode {
    /// Maximize word edit distance from the original transcript.
    Untargeted,
    /// Minimize word edit distance to `target_text`.
    Targeted { target_text: Transcript },
}

fn default_population() -> usize {
    100
}
fn default_survivors() -> usize {
    30
}
fn default_max_iters() -> usize {
    50
}
fn default_noise() -> f64 {
    0.01
}
fn default_parallelism() -> usize {
    1
}
fn default_attempts() -> usize {
    3
}
fn default_backoff_ms() -> u64 {
    100
}

/// Every parameter of one attack run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    #[serde(flatten)]
    pub mode: AttackMode,
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default = "default_population")]
    pub population_size: usize,
    #[serde(default = "default_survivors")]
    pub survivor_count: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub mutation: MutationConfig,
    #[serde(default = "default_noise")]
    pub init_noise_amplitude: f64,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub mfcc: MfccConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_attempts")]
    pub oracle_attempts: usize,
    #[serde(default = "default_backoff_ms")]
    pub oracle_backoff_ms: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            mode: AttackMode::Untargeted,
            algorithm: Algorithm::Moga,
            population_size: default_population(),
            survivor_count: default_survivors(),
            max_iters: default_max_iters(),
            mutation: MutationConfig::default(),
            init_noise_amplitude: default_noise(),
            selection: SelectionConfig::default(),
            mfcc: MfccConfig::default(),
            seed: 0,
            parallelism: default_parallelism(),
            oracle_attempts: default_attempts(),
            oracle_backoff_ms: default_backoff_ms(),
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Config(m.to_owned()));
        if self.population_size == 0 || self.survivor_count == 0 {
            return bad("population_size and survivor_count must be positive");
        }
        if self.survivor_count > self.population_size {
            return bad("survivor_count must not exceed population_size");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if self.selection.elite_count > self.survivor_count {
            return bad("elite_count must not exceed survivor_count");
        }
        if !(self.init_noise_amplitude.is_finite() && self.init_noise_amplitude >= 0.0) {
            return bad("init_noise_amplitude must be non-negative");
        }
        if let AttackMode::Targeted { target_text } = &self.mode {
            if target_text.is_empty() {
                return bad("targeted mode needs a non-empty target_text");
            }
        }
        self.mutation.validate()?;
        self.selection.validate(self.survivor_count)?;
        self.mfcc.validate()?;
        Ok(())
    }

    fn params(&self) -> EvolutionParams {
        EvolutionParams {
            algorithm: self.algorithm,
            survivor_count: self.survivor_count,
            max_iters: self.max_iters,
            mutation: self.mutation,
            selection: self.selection.clone(),
            bounds: GeneBounds::AUDIO,
            seed: self.seed,
            parallelism: self.parallelism.max(1),
            max_attempts: self.oracle_attempts.max(1),
            backoff: Duration::from_millis(self.oracle_backoff_ms),
        }
    }
}

/// Two-objective attack fitness: MFCC distance to the original, and the
/// signed word edit distance of the oracle's transcript.
pub struct AttackFitness<'a> {
    extractor: MfccExtractor,
    original_mfcc: MfccMatrix,
    original_len: usize,
    sample_rate: u32,
    original_transcript: Transcript,
    mode: AttackMode,
    transcriber: &'a dyn Transcriber,
}

impl<'a> AttackFitness<'a> {
    pub fn new(
        original: &AudioClip,
        original_transcript: Transcript,
        mode: AttackMode,
        mfcc: &MfccConfig,
        transcriber: &'a dyn Transcriber,
    ) -> Result<Self, EngineError> {
        let extractor = MfccExtractor::new(mfcc.clone())?;
        let original_mfcc = extractor.compute(original)?;
        Ok(Self {
            extractor,
            original_mfcc,
            original_len: original.len(),
            sample_rate: original.sample_rate(),
            original_transcript,
            mode,
            transcriber,
        })
    }

    pub fn text_objective(&self, candidate: &Transcript) -> f64 {
        match &self.mode {
            AttackMode::Untargeted => -(word_edit_distance(&self.original_transcript, candidate) as f64),
            AttackMode::Targeted { target_text } => word_edit_distance(target_text, candidate) as f64,
        }
    }
}

impl Fitness for AttackFitness<'_> {
    fn evaluate(&self, genome: &[f64]) -> Result<Evaluation, OracleError> {
        if genome.len() != self.original_len {
            return Err(OracleError::Malformed(format!(
                "genome has {} genes, original has {}",
                genome.len(),
                self.original_len
            )));
        }
        let clip = AudioClip::new(genome.to_vec(), self.sample_rate)?;
        let transcript = self.transcriber.transcribe(&clip)?;
        let features = self
            .extractor
            .compute(&clip)
            .map_err(|e| OracleError::Malformed(e.to_string()))?;
        let acoustic = crate::features::mfcc_distance(&self.original_mfcc, &features)
            .map_err(|e| OracleError::Malformed(e.to_string()))?;
        let objectives = ObjectiveVector::new(vec![acoustic, self.text_objective(&transcript)])
            .map_err(|e| OracleError::Malformed(e.to_string()))?;
        Ok(Evaluation {
            objectives,
            transcript: Some(transcript),
        })
    }
}

/// Scores one individual, caching its transcript on it.
pub fn evaluate_fitness(
    individual: &mut Individual,
    original: &AudioClip,
    original_transcript: &Transcript,
    cfg: &AttackConfig,
    transcriber: &dyn Transcriber,
) -> Result<ObjectiveVector, EngineError> {
    let fitness = AttackFitness::new(
        original,
        original_transcript.clone(),
        cfg.mode.clone(),
        &cfg.mfcc,
        transcriber,
    )?;
    let e = fitness
        .evaluate(&individual.genome)
        .map_err(|source| EngineError::Oracle {
            generation: 0,
            index: 0,
            source,
        })?;
    individual.objectives = Some(e.objectives.clone());
    individual.transcript = e.transcript;
    Ok(e.objectives)
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub original_transcript: Transcript,
    pub best: Individual,
    pub best_clip: AudioClip,
    pub history: Vec<GenerationRecord>,
    pub converged: bool,
    pub oracle_calls: usize,
}

pub fn run_attack(
    original: &AudioClip,
    cfg: &AttackConfig,
    transcriber: &dyn Transcriber,
) -> Result<AttackOutcome, EngineError> {
    run_attack_with(original, cfg, transcriber, &mut |_| Ok(()))
}

/// [`run_attack`] with an observer receiving each generation record as it is
/// produced, so aborted runs leave a partial history behind.
pub fn run_attack_with(
    original: &AudioClip,
    cfg: &AttackConfig,
    transcriber: &dyn Transcriber,
    observer: &mut dyn FnMut(&GenerationRecord) -> std::io::Result<()>,
) -> Result<AttackOutcome, EngineError> {
    cfg.validate()?;
    let params = cfg.params();
    let original_transcript = {
        let mut attempt = 0;
        loop {
            match transcriber.transcribe(original) {
                Ok(t) => break t,
                Err(source) if attempt + 1 >= params.max_attempts => {
                    return Err(EngineError::Oracle {
                        generation: 0,
                        index: 0,
                        source,
                    })
                }
                Err(_) => {
                    std::thread::sleep(params.backoff * 2u32.pow(attempt as u32));
                    attempt += 1;
                }
            }
        }
    };
    let fitness = AttackFitness::new(
        original,
        original_transcript.clone(),
        cfg.mode.clone(),
        &cfg.mfcc,
        transcriber,
    )?;
    let mut init_rng = rng::stream(cfg.seed, STREAM_INIT, 0, 0);
    let initial = operators::init_population(
        original,
        cfg.population_size,
        cfg.init_noise_amplitude,
        &mut init_rng,
    );
    let evo = evolve(initial, &params, &fitness, observer)?;
    let best_clip = AudioClip::new(evo.best.genome.clone(), original.sample_rate())
        .expect("genomes stay within [-1, 1]");
    Ok(AttackOutcome {
        original_transcript,
        best: evo.best,
        best_clip,
        history: evo.history,
        converged: evo.converged,
        oracle_calls: evo.oracle_calls,
    })
}
