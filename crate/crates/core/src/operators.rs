//! Population initialization, mating selection, crossover, and mutation.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;
use crate::moea::{Individual, RankedPopulation};

/// Attempts at redrawing a partner before a self-pair is skipped.
const SELF_PAIR_RETRIES: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum OperatorError {
    #[error("parent genomes differ in length ({0} vs {1})")]
    GenomeLength(usize, usize),
    #[error("scheme mix weights must be non-negative and sum to 1")]
    SchemeMix,
    #[error("tournament size must be at least 2")]
    TournamentSize,
    #[error("elite count {0} exceeds population size {1}")]
    EliteCount(usize, usize),
    #[error("mutation probability must lie in [0, 1] and sigma must be non-negative")]
    Mutation,
    #[error("roulette fitness values must be finite, non-negative, and not all zero")]
    Fitness,
    #[error("same-rank and inverse-rank selection need two objectives")]
    ObjectiveCount,
}

/// Closed interval every gene is clamped into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneBounds {
    pub lo: f64,
    pub hi: f64,
}

impl GeneBounds {
    /// Normalized amplitude range.
    pub const AUDIO: Self = Self { lo: -1.0, hi: 1.0 };

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

/// Indices of two distinct members of the current population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatingPair {
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemeMix {
    pub same_rank: f64,
    pub inverse_rank: f64,
    pub roulette: f64,
}

impl Default for SchemeMix {
    fn default() -> Self {
        Self {
            same_rank: 1.0 / 3.0,
            inverse_rank: 1.0 / 3.0,
            roulette: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub scheme_mix: SchemeMix,
    pub tournament_size: usize,
    /// Members carried into the next generation unchanged (NSGA-II).
    pub elite_count: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            scheme_mix: SchemeMix::default(),
            tournament_size: 2,
            elite_count: 10,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self, population_size: usize) -> Result<(), OperatorError> {
        let m = &self.scheme_mix;
        let weights = [m.same_rank, m.inverse_rank, m.roulette];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(OperatorError::SchemeMix);
        }
        if self.tournament_size < 2 {
            return Err(OperatorError::TournamentSize);
        }
        if self.elite_count > population_size {
            return Err(OperatorError::EliteCount(self.elite_count, population_size));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MutationConfig {
    pub prob_m: f64,
    pub sigma: f64,
}

impl Default for MutationConfig {
    fn default() -> Self {
        Self {
            prob_m: 0.005,
            sigma: 0.005,
        }
    }
}

impl MutationConfig {
    pub fn validate(&self) -> Result<(), OperatorError> {
        if !(0.0..=1.0).contains(&self.prob_m) || !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(OperatorError::Mutation);
        }
        Ok(())
    }
}

/// `size` copies of `base`, each perturbed by independent uniform noise in
/// `[-amplitude, amplitude]` and clamped into `bounds`.
pub fn init_around<R: Rng + ?Sized>(
    base: &[f64],
    size: usize,
    amplitude: f64,
    bounds: GeneBounds,
    rng: &mut R,
) -> Vec<Individual> {
    (0..size)
        .map(|_| {
            let genome = base
                .iter()
                .map(|&g| {
                    let u = if amplitude > 0.0 {
                        rng.random_range(-amplitude..=amplitude)
                    } else {
                        0.0
                    };
                    bounds.clamp(g + u)
                })
                .collect();
            Individual::new(genome)
        })
        .collect()
}

pub fn init_population<R: Rng + ?Sized>(
    original: &AudioClip,
    size: usize,
    noise_amplitude: f64,
    rng: &mut R,
) -> Vec<Individual> {
    init_around(original.samples(), size, noise_amplitude, GeneBounds::AUDIO, rng)
}

fn require_two_objectives(pop: &RankedPopulation) -> Result<(), OperatorError> {
    if pop.is_empty() || pop.objectives(0).len() == 2 {
        Ok(())
    } else {
        Err(OperatorError::ObjectiveCount)
    }
}

/// Member indices sorted by one objective; `best_first` is ascending, stable either way.
fn ranked_by(pop: &RankedPopulation, objective: usize, best_first: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| {
        let ord = pop.objectives(a).get(objective).total_cmp(&pop.objectives(b).get(objective));
        if best_first {
            ord
        } else {
            ord.reverse()
        }
    });
    order
}

fn zip_without_self(l1: &[usize], l2: &[usize]) -> Vec<MatingPair> {
    l1.iter()
        .zip(l2)
        .filter(|(a, b)| a != b)
        .map(|(&a, &b)| MatingPair { a, b })
        .collect()
}

/// Pairs the members holding the same rank under each objective.
pub fn same_rank_selection(pop: &RankedPopulation) -> Result<Vec<MatingPair>, OperatorError> {
    require_two_objectives(pop)?;
    Ok(zip_without_self(&ranked_by(pop, 0, true), &ranked_by(pop, 1, true)))
}

/// Pairs rank `r` best-first by objective 1 with rank `r` worst-first by objective 2.
pub fn inverse_rank_selection(pop: &RankedPopulation) -> Result<Vec<MatingPair>, OperatorError> {
    require_two_objectives(pop)?;
    Ok(zip_without_self(&ranked_by(pop, 0, true), &ranked_by(pop, 1, false)))
}

/// Fitness-proportional sampler: member `i` is drawn with probability `f_i / Σ f`.
#[derive(Debug, Clone)]
pub struct RouletteWheel {
    probabilities: Vec<f64>,
    dist: WeightedIndex<f64>,
}

impl RouletteWheel {
    pub fn new(fitness: &[f64]) -> Result<Self, OperatorError> {
        if fitness.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(OperatorError::Fitness);
        }
        let total: f64 = fitness.iter().sum();
        if total <= 0.0 {
            return Err(OperatorError::Fitness);
        }
        let dist = WeightedIndex::new(fitness).map_err(|_| OperatorError::Fitness)?;
        Ok(Self {
            probabilities: fitness.iter().map(|f| f / total).collect(),
            dist,
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn spin<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.dist.sample(rng)
    }
}

/// Scalar roulette fitness `1 / (1 + dominance_count)`.
pub fn roulette_fitness(pop: &RankedPopulation) -> Vec<f64> {
    pop.ranks
        .iter()
        .map(|r| 1.0 / (1.0 + r.dominance_count as f64))
        .collect()
}

fn draw_pairs<R: Rng + ?Sized>(
    n: usize,
    pair_count: usize,
    rng: &mut R,
    mut draw: impl FnMut(&mut R) -> usize,
) -> Vec<MatingPair> {
    let mut pairs = Vec::with_capacity(pair_count);
    if n < 2 {
        return pairs;
    }
    for _ in 0..pair_count {
        let a = draw(rng);
        if let Some(b) = (0..SELF_PAIR_RETRIES).map(|_| draw(rng)).find(|&b| b != a) {
            pairs.push(MatingPair { a, b });
        }
    }
    pairs
}

pub fn roulette_selection<R: Rng + ?Sized>(
    pop: &RankedPopulation,
    pair_count: usize,
    rng: &mut R,
) -> Vec<MatingPair> {
    if pop.is_empty() {
        return Vec::new();
    }
    let wheel = RouletteWheel::new(&roulette_fitness(pop)).expect("fitness values are positive");
    draw_pairs(pop.len(), pair_count, rng, |r| wheel.spin(r))
}

/// Winner of one uniform tournament under the crowded comparison.
pub fn tournament<R: Rng + ?Sized>(pop: &RankedPopulation, size: usize, rng: &mut R) -> usize {
    index::sample(rng, pop.len(), size.min(pop.len()))
        .into_iter()
        .min_by(|&a, &b| pop.crowded_cmp(a, b))
        .expect("population is non-empty")
}

pub fn nsga2_mating_selection<R: Rng + ?Sized>(
    pop: &RankedPopulation,
    pair_count: usize,
    tournament_size: usize,
    rng: &mut R,
) -> Vec<MatingPair> {
    draw_pairs(pop.len(), pair_count, rng, |r| tournament(pop, tournament_size, r))
}

/// Keeps at most `quota` pairs, chosen uniformly and kept in list order.
fn subsample<R: Rng + ?Sized>(mut pairs: Vec<MatingPair>, quota: usize, rng: &mut R) -> Vec<MatingPair> {
    if pairs.len() <= quota {
        return pairs;
    }
    let mut keep = index::sample(rng, pairs.len(), quota).into_vec();
    keep.sort_unstable();
    let picked = keep.iter().map(|&i| pairs[i]).collect();
    pairs.clear();
    picked
}

/// Ensemble MOGA mating pool: same-rank, inverse-rank, and roulette pairs in
/// proportion to `mix`, about `pair_count` pairs in total.
pub fn moga_mating_pool<R: Rng + ?Sized>(
    pop: &RankedPopulation,
    pair_count: usize,
    mix: &SchemeMix,
    rng: &mut R,
) -> Result<Vec<MatingPair>, OperatorError> {
    let same_quota = (mix.same_rank * pair_count as f64).round() as usize;
    let inverse_quota = ((mix.inverse_rank * pair_count as f64).round() as usize)
        .min(pair_count.saturating_sub(same_quota));
    let roulette_quota = pair_count.saturating_sub(same_quota + inverse_quota);
    let mut pool = subsample(same_rank_selection(pop)?, same_quota, rng);
    pool.extend(subsample(inverse_rank_selection(pop)?, inverse_quota, rng));
    if mix.roulette > 0.0 {
        pool.extend(roulette_selection(pop, roulette_quota, rng));
    }
    Ok(pool)
}

/// Three arithmetic children: `(p1+p2)/2`, `(2·p1+p2)/3`, `(p1+2·p2)/3`.
pub fn crossover(
    a: &Individual,
    b: &Individual,
    bounds: GeneBounds,
) -> Result<[Individual; 3], OperatorError> {
    let (p1, p2) = (&a.genome, &b.genome);
    if p1.len() != p2.len() {
        return Err(OperatorError::GenomeLength(p1.len(), p2.len()));
    }
    // `x + t (y - x)` keeps identical parents a bitwise fixed point.
    let blend = |t: f64| -> Individual {
        Individual::new(
            p1.iter()
                .zip(p2)
                .map(|(x, y)| bounds.clamp(x + t * (y - x)))
                .collect(),
        )
    };
    Ok([blend(0.5), blend(1.0 / 3.0), blend(2.0 / 3.0)])
}

/// Adds `N(0, sigma)` to each gene with probability `prob_m`, then clamps.
/// The result carries no cached evaluation.
pub fn mutate<R: Rng + ?Sized>(
    individual: &Individual,
    cfg: &MutationConfig,
    bounds: GeneBounds,
    rng: &mut R,
) -> Individual {
    let mut genome = individual.genome.clone();
    if cfg.prob_m > 0.0 && cfg.sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.sigma).expect("sigma validated");
        for g in genome.iter_mut() {
            if rng.random_bool(cfg.prob_m) {
                *g = bounds.clamp(*g + noise.sample(rng));
            }
        }
    }
    Individual::new(genome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moea::ObjectiveVector;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn ranked(vs: &[[f64; 2]]) -> RankedPopulation {
        RankedPopulation::new(
            vs.iter()
                .enumerate()
                .map(|(i, v)| Individual::evaluated(vec![i as f64 / 10.0], ObjectiveVector::from(*v)))
                .collect(),
        )
        .unwrap()
    }

    fn pairs(v: &[(usize, usize)]) -> Vec<MatingPair> {
        v.iter().map(|&(a, b)| MatingPair { a, b }).collect()
    }

    #[test]
    fn zero_noise_init_copies_original() {
        let clip = AudioClip::new(vec![0.1, -0.2, 0.3], 16_000).unwrap();
        let pop = init_population(&clip, 100, 0.0, &mut seeded(1));
        assert_eq!(pop.len(), 100);
        assert!(pop.iter().all(|i| i.genome == clip.samples()));
    }

    #[test]
    fn init_noise_is_bounded_and_distinct() {
        let base: Vec<f64> = (0..500).map(|i| (i as f64 / 250.0) - 1.0).collect();
        let pop = init_around(&base, 20, 0.01, GeneBounds { lo: -10.0, hi: 10.0 }, &mut seeded(5));
        for ind in &pop {
            for (g, o) in ind.genome.iter().zip(&base) {
                assert!((g - o).abs() <= 0.01);
            }
        }
        assert_ne!(pop[0].genome, pop[1].genome);
        let clamped = init_around(&base, 5, 0.5, GeneBounds::AUDIO, &mut seeded(5));
        assert!(clamped.iter().flat_map(|i| &i.genome).all(|g| (-1.0..=1.0).contains(g)));
    }

    #[test]
    fn same_rank_examples() {
        let p = ranked(&[[1.0, 3.0], [2.0, 2.0], [3.0, 1.0]]);
        assert_eq!(same_rank_selection(&p).unwrap(), pairs(&[(0, 2), (2, 0)]));
        let flat = ranked(&[[1.0, 1.0]; 4]);
        assert!(same_rank_selection(&flat).unwrap().is_empty());
    }

    #[test]
    fn inverse_rank_examples() {
        let p = ranked(&[[1.0, 3.0], [2.0, 2.0], [3.0, 1.0]]);
        assert!(inverse_rank_selection(&p).unwrap().is_empty());
        let chain = ranked(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]);
        assert_eq!(inverse_rank_selection(&chain).unwrap(), pairs(&[(0, 2), (2, 0)]));
    }

    #[test]
    fn rank_schemes_need_two_objectives() {
        let p = RankedPopulation::new(vec![Individual::evaluated(
            vec![0.0],
            ObjectiveVector::new(vec![1.0, 2.0, 3.0]).unwrap(),
        )])
        .unwrap();
        assert_eq!(same_rank_selection(&p), Err(OperatorError::ObjectiveCount));
    }

    #[test]
    fn roulette_probabilities_follow_fitness_share() {
        let wheel = RouletteWheel::new(&[1.0, 3.0]).unwrap();
        assert_eq!(wheel.probabilities(), &[0.25, 0.75]);
        let uniform = RouletteWheel::new(&[2.0; 5]).unwrap();
        assert!(uniform.probabilities().iter().all(|p| (p - 0.2).abs() < 1e-15));
        assert!(RouletteWheel::new(&[0.0, 0.0]).is_err());
        assert!(RouletteWheel::new(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn roulette_empirical_frequencies() {
        let wheel = RouletteWheel::new(&[1.0, 3.0]).unwrap();
        let mut rng = seeded(11);
        let draws = 100_000;
        let ones = (0..draws).filter(|_| wheel.spin(&mut rng) == 1).count();
        assert!((ones as f64 / draws as f64 - 0.75).abs() <= 0.01);
    }

    #[test]
    fn roulette_pairs_are_distinct() {
        let p = ranked(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [0.5, 4.0]]);
        let ps = roulette_selection(&p, 200, &mut seeded(3));
        assert_eq!(ps.len(), 200);
        assert!(ps.iter().all(|p| p.a != p.b && p.a < 4 && p.b < 4));
        let single = ranked(&[[1.0, 1.0]]);
        assert!(roulette_selection(&single, 10, &mut seeded(3)).is_empty());
    }

    #[test]
    fn tournament_comparator() {
        // member 0 is front 0, member 1 is front 1
        let p = ranked(&[[1.0, 1.0], [2.0, 2.0]]);
        for s in 0..20 {
            assert_eq!(tournament(&p, 2, &mut seeded(s)), 0);
        }
        // one front: boundaries have infinite crowding, the middle is finite
        let f = ranked(&[[0.0, 2.0], [1.0, 1.0], [2.0, 0.0]]);
        assert_eq!(f.crowded_cmp(0, 1), std::cmp::Ordering::Less);
        assert_eq!(f.crowded_cmp(2, 1), std::cmp::Ordering::Less);
    }

    #[test]
    fn tournament_wins_are_monotone_in_rank() {
        let objs: Vec<[f64; 2]> = vec![
            [0.0, 4.0], [1.0, 3.0], [2.0, 2.0], [3.0, 1.0], [4.0, 0.0],
            [1.0, 4.0], [2.0, 3.0], [3.0, 2.0], [4.0, 4.0], [5.0, 5.0],
        ];
        let p = ranked(&objs);
        let mut wins = vec![0usize; objs.len()];
        let mut rng = seeded(99);
        for _ in 0..50_000 {
            wins[tournament(&p, 2, &mut rng)] += 1;
        }
        for a in 0..objs.len() {
            for b in 0..objs.len() {
                if p.crowded_cmp(a, b) == std::cmp::Ordering::Less {
                    assert!(wins[a] >= wins[b], "{a} beats {b} but won {} < {}", wins[a], wins[b]);
                }
            }
        }
    }

    #[test]
    fn moga_pool_respects_quotas() {
        let objs: Vec<[f64; 2]> = (0..12).map(|i| [i as f64, ((i * 7) % 12) as f64]).collect();
        let p = ranked(&objs);
        let pool = moga_mating_pool(&p, 12, &SchemeMix::default(), &mut seeded(4)).unwrap();
        assert!(pool.len() <= 12);
        assert!(pool.iter().all(|mp| mp.a != mp.b));
        let only_roulette = SchemeMix { same_rank: 0.0, inverse_rank: 0.0, roulette: 1.0 };
        assert_eq!(moga_mating_pool(&p, 12, &only_roulette, &mut seeded(4)).unwrap().len(), 12);
    }

    #[test]
    fn selection_config_validation() {
        assert!(SelectionConfig::default().validate(30).is_ok());
        let bad_mix = SelectionConfig {
            scheme_mix: SchemeMix { same_rank: 0.5, inverse_rank: 0.5, roulette: 0.5 },
            ..Default::default()
        };
        assert_eq!(bad_mix.validate(30), Err(OperatorError::SchemeMix));
        let bad_t = SelectionConfig { tournament_size: 1, ..Default::default() };
        assert_eq!(bad_t.validate(30), Err(OperatorError::TournamentSize));
        assert_eq!(SelectionConfig::default().validate(5), Err(OperatorError::EliteCount(10, 5)));
        assert!(MutationConfig { prob_m: 1.5, sigma: 0.1 }.validate().is_err());
        assert!(MutationConfig { prob_m: 0.5, sigma: -0.1 }.validate().is_err());
    }

    #[test]
    fn crossover_examples() {
        let a = Individual::new(vec![0.0; 4]);
        let b = Individual::new(vec![0.6; 4]);
        let [c1, c2, c3] = crossover(&a, &b, GeneBounds::AUDIO).unwrap();
        for (child, want) in [(c1, 0.3), (c2, 0.2), (c3, 0.4)] {
            assert!(child.genome.iter().all(|g| (g - want).abs() < 1e-12));
            assert!(!child.is_evaluated());
        }
        let same = Individual::new(vec![0.25, -0.5]);
        for child in crossover(&same, &same, GeneBounds::AUDIO).unwrap() {
            assert_eq!(child.genome, same.genome);
        }
        assert_eq!(
            crossover(&a, &Individual::new(vec![0.0]), GeneBounds::AUDIO),
            Err(OperatorError::GenomeLength(4, 1))
        );
    }

    #[test]
    fn degenerate_mutation_is_identity() {
        let ind = Individual::evaluated(vec![0.1; 1000], ObjectiveVector::from([1.0, 2.0]));
        let m0 = mutate(&ind, &MutationConfig { prob_m: 0.0, sigma: 0.1 }, GeneBounds::AUDIO, &mut seeded(1));
        assert_eq!(m0.genome, ind.genome);
        assert!(!m0.is_evaluated());
        let s0 = mutate(&ind, &MutationConfig { prob_m: 1.0, sigma: 0.0 }, GeneBounds::AUDIO, &mut seeded(1));
        assert_eq!(s0.genome, ind.genome);
    }

    #[test]
    fn mutated_gene_count_is_binomial() {
        let n = 32_000;
        let p = 0.005;
        let ind = Individual::new(vec![0.0; n]);
        let cfg = MutationConfig::default();
        let trials = 50;
        let mut total = 0usize;
        for t in 0..trials {
            let m = mutate(&ind, &cfg, GeneBounds::AUDIO, &mut seeded(t));
            let changed = m.genome.iter().filter(|&&g| g != 0.0).count();
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((changed as f64 - n as f64 * p).abs() <= 3.0 * sd + 1.0, "trial {t}: {changed}");
            total += changed;
        }
        let mean = total as f64 / trials as f64;
        assert!((mean - 160.0).abs() < 3.0 * (160.0f64 * 0.995 / trials as f64).sqrt());
    }

    proptest! {
        #[test]
        fn children_are_convex_combinations(
            genes in prop::collection::vec((-1.0f64..=1.0, -1.0f64..=1.0), 1..64),
        ) {
            let a = Individual::new(genes.iter().map(|g| g.0).collect());
            let b = Individual::new(genes.iter().map(|g| g.1).collect());
            for child in crossover(&a, &b, GeneBounds::AUDIO).unwrap() {
                prop_assert_eq!(child.genome.len(), genes.len());
                for (c, (x, y)) in child.genome.iter().zip(&genes) {
                    prop_assert!(*c >= x.min(*y) - 1e-15 && *c <= x.max(*y) + 1e-15);
                }
            }
        }

        #[test]
        fn mutation_stays_in_bounds(seed in any::<u64>(), sigma in 0.0f64..2.0) {
            let ind = Individual::new(vec![0.99; 256]);
            let m = mutate(&ind, &MutationConfig { prob_m: 0.5, sigma }, GeneBounds::AUDIO, &mut seeded(seed));
            prop_assert_eq!(m.genome.len(), 256);
            prop_assert!(m.genome.iter().all(|g| (-1.0..=1.0).contains(g)));
        }

        #[test]
        fn operators_are_seed_deterministic(seed in any::<u64>()) {
            let p = ranked(&[[1.0, 4.0], [2.0, 2.0], [3.0, 1.0], [0.5, 5.0], [4.0, 4.0]]);
            let mix = SchemeMix::default();
            prop_assert_eq!(
                moga_mating_pool(&p, 5, &mix, &mut seeded(seed)).unwrap(),
                moga_mating_pool(&p, 5, &mix, &mut seeded(seed)).unwrap()
            );
            prop_assert_eq!(
                nsga2_mating_selection(&p, 5, 2, &mut seeded(seed)),
                nsga2_mating_selection(&p, 5, 2, &mut seeded(seed))
            );
        }

        #[test]
        fn roulette_probabilities_sum_to_one(f in prop::collection::vec(0.01f64..100.0, 1..50)) {
            let w = RouletteWheel::new(&f).unwrap();
            prop_assert!((w.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
