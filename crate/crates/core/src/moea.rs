//! Algorithm-agnostic multi-objective machinery.
//!
//! Every objective is minimized. Objectives that a caller wants maximized are
//! stored negated, so one dominance relation serves every attack mode.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::Transcript;

#[derive(Debug, Error, PartialEq)]
pub enum MoeaError {
    #[error("objective vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("individual {0} has not been evaluated")]
    Unevaluated(usize),
    #[error("crowding distance of an empty front is undefined")]
    EmptyFront,
    #[error("objective value {0} is not finite")]
    NonFinite(f64),
}

/// Objective values in minimization orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectiveVector(Vec<f64>);

impl ObjectiveVector {
    pub fn new(values: Vec<f64>) -> Result<Self, MoeaError> {
        if let Some(&v) = values.iter().find(|v| !v.is_finite()) {
            return Err(MoeaError::NonFinite(v));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, objective: usize) -> f64 {
        self.0[objective]
    }
}

impl From<[f64; 2]> for ObjectiveVector {
    fn from(v: [f64; 2]) -> Self {
        Self(v.to_vec())
    }
}

/// A candidate solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Vec<f64>,
    pub objectives: Option<ObjectiveVector>,
    /// Oracle output cached at evaluation.
    pub transcript: Option<Transcript>,
}

impl Individual {
    pub fn new(genome: Vec<f64>) -> Self {
        Self {
            genome,
            objectives: None,
            transcript: None,
        }
    }

    pub fn evaluated(genome: Vec<f64>, objectives: ObjectiveVector) -> Self {
        Self {
            genome,
            objectives: Some(objectives),
            transcript: None,
        }
    }

    pub fn is_evaluated(&self) -> bool {
        self.objectives.is_some()
    }

    /// Drops cached evaluation results after the genome changes.
    pub fn invalidate(&mut self) {
        self.objectives = None;
        self.transcript = None;
    }
}

/// `a` dominates `b` when it is no worse in every objective and strictly
/// better in at least one.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> Result<bool, MoeaError> {
    if a.len() != b.len() {
        return Err(MoeaError::LengthMismatch(a.len(), b.len()));
    }
    Ok(dominates_unchecked(a.values(), b.values()))
}

pub(crate) fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strictly_better = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly_better = true;
        }
    }
    strictly_better
}

/// Partition of a population into successive non-dominated fronts.
#[derive(Debug, Clone, PartialEq)]
pub struct Fronts {
    /// Member indices of each front, ascending within a front.
    pub fronts: Vec<Vec<usize>>,
    /// Front index of every member.
    pub rank: Vec<usize>,
}

fn objectives_of(pop: &[Individual]) -> Result<Vec<&ObjectiveVector>, MoeaError> {
    let objs = pop
        .iter()
        .enumerate()
        .map(|(i, ind)| ind.objectives.as_ref().ok_or(MoeaError::Unevaluated(i)))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(first) = objs.first() {
        if let Some(bad) = objs.iter().find(|o| o.len() != first.len()) {
            return Err(MoeaError::LengthMismatch(first.len(), bad.len()));
        }
    }
    Ok(objs)
}

/// Deb's fast non-dominated sort over evaluated individuals.
pub fn fast_nondominated_sort(pop: &[Individual]) -> Result<Fronts, MoeaError> {
    let objs = objectives_of(pop)?;
    Ok(sort_vectors(&objs))
}

/// Non-dominated sort over raw objective vectors; all must share one length.
pub fn sort_objectives(objs: &[ObjectiveVector]) -> Fronts {
    sort_vectors(&objs.iter().collect::<Vec<_>>())
}

fn sort_vectors(objs: &[&ObjectiveVector]) -> Fronts {
    let n = objs.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut dominator_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates_unchecked(objs[i].values(), objs[j].values()) {
                dominated_by_me[i].push(j);
                dominator_count[j] += 1;
            } else if dominates_unchecked(objs[j].values(), objs[i].values()) {
                dominated_by_me[j].push(i);
                dominator_count[i] += 1;
            }
        }
    }
    let mut rank = vec![0usize; n];
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominator_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            rank[p] = fronts.len();
            for &q in &dominated_by_me[p] {
                dominator_count[q] -= 1;
                if dominator_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    Fronts { fronts, rank }
}

/// Number of other members dominating each member (Fonseca–Fleming rank).
pub fn dominance_count_rank(pop: &[Individual]) -> Result<Vec<usize>, MoeaError> {
    let objs = objectives_of(pop)?;
    Ok(dominance_counts(&objs))
}

fn dominance_counts(objs: &[&ObjectiveVector]) -> Vec<usize> {
    objs.iter()
        .map(|me| {
            objs.iter()
                .filter(|other| dominates_unchecked(other.values(), me.values()))
                .count()
        })
        .collect()
}

/// NSGA-II crowding distance of each member of one front. Boundary members
/// of every objective get `+inf`; a degenerate objective range contributes 0.
pub fn crowding_distance(front: &[ObjectiveVector]) -> Result<Vec<f64>, MoeaError> {
    crowding_of(&front.iter().collect::<Vec<_>>())
}

fn crowding_of(front: &[&ObjectiveVector]) -> Result<Vec<f64>, MoeaError> {
    let n = front.len();
    if n == 0 {
        return Err(MoeaError::EmptyFront);
    }
    let m = front[0].len();
    if let Some(bad) = front.iter().find(|o| o.len() != m) {
        return Err(MoeaError::LengthMismatch(m, bad.len()));
    }
    let mut dist = vec![0.0f64; n];
    if n <= 2 {
        dist.fill(f64::INFINITY);
        return Ok(dist);
    }
    let mut order: Vec<usize> = (0..n).collect();
    for obj in 0..m {
        order.sort_by(|&a, &b| front[a].get(obj).total_cmp(&front[b].get(obj)));
        let lo = front[order[0]].get(obj);
        let hi = front[order[n - 1]].get(obj);
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let gap = front[order[w + 1]].get(obj) - front[order[w - 1]].get(obj);
            dist[order[w]] += gap / range;
        }
    }
    Ok(dist)
}

/// Per-member ranking data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankInfo {
    pub front: usize,
    pub dominance_count: usize,
    pub crowding: f64,
}

/// Evaluated members annotated with front index, dominance count, and crowding.
#[derive(Debug, Clone)]
pub struct RankedPopulation {
    pub members: Vec<Individual>,
    pub ranks: Vec<RankInfo>,
    pub fronts: Vec<Vec<usize>>,
}

impl RankedPopulation {
    pub fn new(members: Vec<Individual>) -> Result<Self, MoeaError> {
        let objs = objectives_of(&members)?;
        let Fronts { fronts, rank } = sort_vectors(&objs);
        let counts = dominance_counts(&objs);
        let mut crowding = vec![0.0; members.len()];
        for front in &fronts {
            let vecs: Vec<&ObjectiveVector> = front.iter().map(|&i| objs[i]).collect();
            for (&i, d) in front.iter().zip(crowding_of(&vecs)?) {
                crowding[i] = d;
            }
        }
        let ranks = (0..members.len())
            .map(|i| RankInfo {
                front: rank[i],
                dominance_count: counts[i],
                crowding: crowding[i],
            })
            .collect();
        Ok(Self {
            members,
            ranks,
            fronts,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn objectives(&self, i: usize) -> &ObjectiveVector {
        self.members[i]
            .objectives
            .as_ref()
            .expect("ranked members are evaluated")
    }

    /// Indices of front 0.
    pub fn first_front(&self) -> &[usize] {
        self.fronts.first().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Crowded comparison: lower front first, then larger crowding distance,
    /// then lower index.
    pub fn crowded_cmp(&self, a: usize, b: usize) -> Ordering {
        let (ra, rb) = (&self.ranks[a], &self.ranks[b]);
        ra.front
            .cmp(&rb.front)
            .then_with(|| rb.crowding.total_cmp(&ra.crowding))
            .then_with(|| a.cmp(&b))
    }

    /// Member indices ordered by [`Self::crowded_cmp`].
    pub fn crowded_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.crowded_cmp(a, b));
        order
    }

    /// Member indices ordered by dominance count, then objective 1, then index.
    pub fn dominance_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.ranks[a]
                .dominance_count
                .cmp(&self.ranks[b].dominance_count)
                .then_with(|| self.objectives(a).get(0).total_cmp(&self.objectives(b).get(0)))
                .then_with(|| a.cmp(&b))
        });
        order
    }
}
