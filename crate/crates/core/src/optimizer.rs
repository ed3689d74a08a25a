//! Multi-objective search over viewpoint combinations.
//!
//! An elitist genetic algorithm (NSGA-II) explores fixed-size combinations
//! of the filtered candidates, trading spatial coverage against distance to
//! the watched volume. Candidates that already meet the coverage threshold
//! on their own are merged back into the final front as single-view
//! solutions, the merged set is re-ranked, and the winner is chosen by
//! target visibility when an object is manipulated, by coverage otherwise.
//!
//! Visibility is deliberately evaluated only on that final merged set; it
//! needs ray casts against per-state occupancy grids and would dominate the
//! runtime if computed inside the generational loop.

use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{avg_visibility, CameraView};
use crate::metrics::ObjectiveVector;
use crate::robot::{MotionEnvelope, TargetPointSet};
use crate::sampler::CandidateViewpoint;
use crate::voxel::VoxelGrid3;
use crate::{Error, Result};

/// Search parameters for the genetic loop.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Nsga2Params {
    /// Population size, even and at least 4.
    pub population: usize,
    pub generations: usize,
    pub crossover_probability: f64,
    pub mutation_probability: f64,
    pub tournament_size: usize,
    pub seed: u64,
}

impl Default for Nsga2Params {
    fn default() -> Self {
        Self {
            population: 200,
            generations: 70,
            crossover_probability: 0.9,
            mutation_probability: 0.2,
            tournament_size: 2,
            seed: 0,
        }
    }
}

impl Nsga2Params {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 || self.population % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "population must be even and at least 4, got {}",
                self.population
            )));
        }
        for (name, p) in [
            ("crossover", self.crossover_probability),
            ("mutation", self.mutation_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "{name} probability must be in [0, 1], got {p}"
                )));
            }
        }
        if self.tournament_size == 0 {
            return Err(Error::InvalidParameter(
                "tournament size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One member of the search population. The chromosome holds distinct,
/// sorted positions into the candidate list.
#[derive(Clone, Debug)]
pub struct Individual {
    pub chromosome: Vec<usize>,
    pub objectives: ObjectiveVector,
    /// Non-domination rank; 0 means dominated by nobody in the population.
    pub rank: usize,
    /// Crowding distance within the individual's front.
    pub crowding: f64,
}

/// Precomputed per-candidate evaluation data.
///
/// Coverage of a combination is the size of the union of per-candidate
/// "contains point i" bitsets over the envelope; distance is the mean of
/// per-candidate values. Both reproduce the metrics-module definitions
/// bit for bit, only faster to query.
pub struct EvalContext<'a> {
    pub candidates: &'a [CandidateViewpoint],
    masks: Vec<Vec<u64>>,
    view_distances: Vec<f64>,
    num_points: usize,
}

impl<'a> EvalContext<'a> {
    pub fn new(
        candidates: &'a [CandidateViewpoint],
        envelope: &MotionEnvelope,
        target: Option<&TargetPointSet>,
    ) -> Self {
        assert!(!envelope.points.is_empty(), "empty motion envelope");
        let num_points = envelope.points.len();
        let words = num_points.div_ceil(64);
        let masks = candidates
            .iter()
            .map(|c| {
                let mut mask = vec![0u64; words];
                for (i, p) in envelope.points.iter().enumerate() {
                    if c.view.contains_point(p) {
                        mask[i / 64] |= 1 << (i % 64);
                    }
                }
                mask
            })
            .collect();
        let state_centroids = target.map(|t| t.state_centroids());
        let envelope_centroid = envelope.centroid();
        let view_distances = candidates
            .iter()
            .map(|c| match &state_centroids {
                Some(centroids) => {
                    crate::metrics::per_view_place_distance(&c.view.pose.position, centroids)
                }
                None => (envelope_centroid - c.view.pose.position).norm(),
            })
            .collect();
        Self {
            candidates,
            masks,
            view_distances,
            num_points,
        }
    }

    /// Distance objective contribution of one candidate on its own.
    pub fn view_distance(&self, position: usize) -> f64 {
        self.view_distances[position]
    }

    /// Coverage of one candidate on its own.
    pub fn single_coverage(&self, position: usize) -> f64 {
        let covered: u32 = self.masks[position].iter().map(|w| w.count_ones()).sum();
        covered as f64 / self.num_points as f64
    }

    /// Objectives of a combination, given as positions into the candidate
    /// list (any length from 1 up).
    pub fn evaluate(&self, chromosome: &[usize]) -> ObjectiveVector {
        debug_assert!(!chromosome.is_empty());
        debug_assert!(chromosome.iter().all(|&g| g < self.candidates.len()));
        let words = self.masks.first().map_or(0, Vec::len);
        let mut covered = 0usize;
        for w in 0..words {
            let mut union = 0u64;
            for &gene in chromosome {
                union |= self.masks[gene][w];
            }
            covered += union.count_ones() as usize;
        }
        let coverage = covered as f64 / self.num_points as f64;
        let distance = chromosome
            .iter()
            .map(|&gene| self.view_distances[gene])
            .sum::<f64>()
            / chromosome.len() as f64;
        ObjectiveVector::new(coverage, distance)
    }

    fn camera_views(&self, chromosome: &[usize]) -> Vec<CameraView> {
        chromosome
            .iter()
            .map(|&gene| self.candidates[gene].view)
            .collect()
    }
}

/// Splits a population into fronts of mutually non-dominated individuals.
///
/// Front 0 holds everyone dominated by nobody; front k holds individuals
/// dominated only by members of earlier fronts. Returned indices refer to
/// `objectives` order.
pub fn fast_nondominated_sort(objectives: &[ObjectiveVector]) -> Vec<Vec<usize>> {
    let n = objectives.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    let mut fronts: Vec<Vec<usize>> = vec![Vec::new()];
    for p in 0..n {
        for q in 0..n {
            if objectives[p].dominates(&objectives[q]) {
                dominated_by[p].push(q);
            } else if objectives[q].dominates(&objectives[p]) {
                domination_count[p] += 1;
            }
        }
        if domination_count[p] == 0 {
            fronts[0].push(p);
        }
    }
    let mut current = 0;
    while !fronts[current].is_empty() {
        let mut next = Vec::new();
        for &p in &fronts[current] {
            for &q in &dominated_by[p] {
                domination_count[q] -= 1;
                if domination_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        fronts.push(next);
        current += 1;
    }
    fronts.pop();
    fronts
}

/// Crowding distance of each member of one front.
///
/// Per objective, the extreme individuals get infinity and interior ones
/// accumulate the normalized gap between their neighbors; an objective with
/// zero range contributes nothing.
pub fn crowding_distance(objectives: &[ObjectiveVector]) -> Vec<f64> {
    let n = objectives.len();
    let mut crowding = vec![0.0; n];
    for objective in 0..2 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            objectives[a].minimized()[objective].total_cmp(&objectives[b].minimized()[objective])
        });
        let lo = objectives[order[0]].minimized()[objective];
        let hi = objectives[order[n - 1]].minimized()[objective];
        crowding[order[0]] = f64::INFINITY;
        crowding[order[n - 1]] = f64::INFINITY;
        if hi - lo <= 0.0 {
            continue;
        }
        for w in order.windows(3) {
            let gap = objectives[w[2]].minimized()[objective]
                - objectives[w[0]].minimized()[objective];
            crowding[w[1]] += gap / (hi - lo);
        }
    }
    crowding
}

/// Runs the generational search and returns the final non-dominated set,
/// deduplicated by chromosome. Deterministic in `params.seed`.
///
/// `n_views` is the number of supervising robots, i.e. the combination
/// size. With exactly `n_views` candidates the single possible combination
/// is returned outright.
pub fn nsga2_run(
    ctx: &EvalContext,
    n_views: usize,
    params: &Nsga2Params,
) -> Result<Vec<Individual>> {
    params.validate()?;
    if n_views == 0 {
        return Err(Error::InvalidParameter("combination size must be at least 1".into()));
    }
    let n = ctx.candidates.len();
    if n < n_views {
        return Err(Error::InsufficientCandidates {
            available: n,
            needed: n_views,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut population: Vec<Individual> = (0..params.population)
        .map(|_| {
            let mut chromosome = (0..n).choose_multiple(&mut rng, n_views);
            chromosome.sort_unstable();
            make_individual(ctx, chromosome)
        })
        .collect();
    assign_rank_and_crowding(&mut population);
    let mut best_coverage = best_coverage_of(&population);

    for _ in 0..params.generations {
        let mut offspring = Vec::with_capacity(params.population);
        while offspring.len() < params.population {
            let a = tournament(&population, params.tournament_size, &mut rng);
            let b = tournament(&population, params.tournament_size, &mut rng);
            let (mut left, mut right) = crossover(
                &population[a].chromosome,
                &population[b].chromosome,
                params.crossover_probability,
                &mut rng,
            );
            for child in [&mut left, &mut right] {
                mutate(child, n, params.mutation_probability, &mut rng);
                repair(child, n, &mut rng);
            }
            for chromosome in [left, right] {
                if offspring.len() < params.population {
                    offspring.push(make_individual(ctx, chromosome));
                }
            }
        }
        population.extend(offspring);
        assign_rank_and_crowding(&mut population);
        population = select_survivors(population, params.population);
        let generation_best = best_coverage_of(&population);
        debug_assert!(
            generation_best >= best_coverage,
            "elitism lost the best coverage: {generation_best} < {best_coverage}"
        );
        best_coverage = generation_best;
    }

    assign_rank_and_crowding(&mut population);
    let mut front: Vec<Individual> = population.into_iter().filter(|i| i.rank == 0).collect();
    front.sort_by(|a, b| a.chromosome.cmp(&b.chromosome));
    front.dedup_by(|a, b| a.chromosome == b.chromosome);
    Ok(front)
}

fn make_individual(ctx: &EvalContext, chromosome: Vec<usize>) -> Individual {
    Individual {
        objectives: ctx.evaluate(&chromosome),
        chromosome,
        rank: 0,
        crowding: 0.0,
    }
}

fn best_coverage_of(population: &[Individual]) -> f64 {
    population
        .iter()
        .map(|i| i.objectives.coverage)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn assign_rank_and_crowding(population: &mut [Individual]) {
    let objectives: Vec<ObjectiveVector> = population.iter().map(|i| i.objectives).collect();
    for (rank, front) in fast_nondominated_sort(&objectives).iter().enumerate() {
        let front_objectives: Vec<ObjectiveVector> =
            front.iter().map(|&i| objectives[i]).collect();
        let crowding = crowding_distance(&front_objectives);
        for (&member, &distance) in front.iter().zip(&crowding) {
            population[member].rank = rank;
            population[member].crowding = distance;
        }
    }
}

/// Keeps the `capacity` best individuals by (rank, crowding), filling whole
/// fronts first and breaking the partial front by crowding, then position.
fn select_survivors(population: Vec<Individual>, capacity: usize) -> Vec<Individual> {
    let mut order: Vec<usize> = (0..population.len()).collect();
    order.sort_by(|&a, &b| {
        population[a]
            .rank
            .cmp(&population[b].rank)
            .then_with(|| population[b].crowding.total_cmp(&population[a].crowding))
            .then_with(|| a.cmp(&b))
    });
    order.truncate(capacity);
    order.sort_unstable();
    let mut keep = vec![false; population.len()];
    for &i in &order {
        keep[i] = true;
    }
    population
        .into_iter()
        .zip(keep)
        .filter_map(|(individual, kept)| kept.then_some(individual))
        .collect()
}

fn tournament(population: &[Individual], size: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut winner = rng.gen_range(0..population.len());
    for _ in 1..size {
        let contender = rng.gen_range(0..population.len());
        let w = &population[winner];
        let c = &population[contender];
        if c.rank < w.rank || (c.rank == w.rank && c.crowding > w.crowding) {
            winner = contender;
        }
    }
    winner
}

fn crossover(
    a: &[usize],
    b: &[usize],
    probability: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut left = a.to_vec();
    let mut right = b.to_vec();
    if rng.gen_bool(probability) {
        for slot in 0..left.len() {
            if rng.gen_bool(0.5) {
                std::mem::swap(&mut left[slot], &mut right[slot]);
            }
        }
    }
    (left, right)
}

fn mutate(chromosome: &mut [usize], n: usize, probability: f64, rng: &mut ChaCha8Rng) {
    for gene in chromosome {
        if rng.gen_bool(probability) {
            *gene = rng.gen_range(0..n);
        }
    }
}

/// Re-draws colliding genes until all are distinct, then sorts. Terminates
/// because the candidate pool is at least as large as the chromosome.
fn repair(chromosome: &mut Vec<usize>, n: usize, rng: &mut ChaCha8Rng) {
    loop {
        chromosome.sort_unstable();
        match chromosome.windows(2).position(|w| w[0] == w[1]) {
            None => return,
            Some(i) => chromosome[i + 1] = rng.gen_range(0..n),
        }
    }
}

/// Ray-cast inputs for scoring target visibility of the merged front.
pub struct VisibilityContext<'a> {
    /// Environment plus construction robot occupancy, one grid per state.
    pub state_grids: &'a [VoxelGrid3],
    pub target: &'a TargetPointSet,
    /// Hit acceptance radius for the ray casts, meters.
    pub epsilon: f64,
}

/// The chosen deployment: one viewpoint or a combination.
#[derive(Clone, Debug)]
pub struct SelectionOutcome {
    /// Stable ids of the chosen candidates (ascending).
    pub candidate_ids: Vec<usize>,
    /// Positions of the chosen candidates in the filtered list.
    pub positions: Vec<usize>,
    pub coverage: f64,
    /// Mean camera-to-target distance, the search objective.
    pub distance: f64,
    /// Distance contribution of each view, aligned with `candidate_ids`.
    pub view_distances: Vec<f64>,
    /// Mean target visibility over states; present when an object is
    /// manipulated.
    pub avg_visibility: Option<f64>,
    /// True when nothing reached the coverage threshold and this is the
    /// best effort instead of a compliant result.
    pub below_threshold: bool,
}

impl SelectionOutcome {
    pub fn is_single(&self) -> bool {
        self.candidate_ids.len() == 1
    }
}

/// Merges single-view candidates with the final front, re-ranks the merged
/// set, drops solutions under `coverage_threshold`, and picks the winner:
/// highest target visibility when a visibility context is given, highest
/// coverage otherwise. Ties fall to smaller distance, then smaller ids.
///
/// When nothing reaches the threshold the best remaining solution (by
/// coverage, same tie-breaks) is returned flagged `below_threshold`.
///
/// `singles` holds positions into the candidate list that already meet the
/// threshold on their own.
pub fn select_final(
    ctx: &EvalContext,
    front: &[Individual],
    singles: &[usize],
    coverage_threshold: f64,
    visibility: Option<&VisibilityContext>,
) -> Result<SelectionOutcome> {
    let mut merged: Vec<(Vec<usize>, ObjectiveVector)> = Vec::new();
    for &position in singles {
        let chromosome = vec![position];
        let objectives = ctx.evaluate(&chromosome);
        merged.push((chromosome, objectives));
    }
    merged.extend(
        front
            .iter()
            .map(|i| (i.chromosome.clone(), i.objectives)),
    );
    if merged.is_empty() {
        return Err(Error::EmptyStage {
            stage: "final selection".into(),
            detail: "no single viewpoints or combinations to choose from".into(),
        });
    }

    let objectives: Vec<ObjectiveVector> = merged.iter().map(|(_, o)| *o).collect();
    let rank0 = &fast_nondominated_sort(&objectives)[0];
    let eligible: Vec<usize> = rank0
        .iter()
        .copied()
        .filter(|&i| objectives[i].coverage >= coverage_threshold)
        .collect();
    let below_threshold = eligible.is_empty();
    let pool = if below_threshold { rank0.clone() } else { eligible };

    // Scores are compared descending; coverage stands in for visibility in
    // pick mode and for the below-threshold fallback.
    let scored: Vec<(usize, f64)> = match (visibility, below_threshold) {
        (Some(vis), false) => pool
            .iter()
            .map(|&i| {
                let views = ctx.camera_views(&merged[i].0);
                avg_visibility(&views, vis.state_grids, &vis.target.world_points, vis.epsilon)
                    .map(|v| (i, v))
            })
            .collect::<Result<_>>()?,
        _ => pool.iter().map(|&i| (i, objectives[i].coverage)).collect(),
    };
    let &(winner, _) = scored
        .iter()
        .reduce(|best, contender| {
            let (bi, bs) = *best;
            let (ci, cs) = *contender;
            let better = cs > bs
                || (cs == bs && objectives[ci].distance < objectives[bi].distance)
                || (cs == bs
                    && objectives[ci].distance == objectives[bi].distance
                    && candidate_ids(ctx, &merged[ci].0) < candidate_ids(ctx, &merged[bi].0));
            if better {
                contender
            } else {
                best
            }
        })
        .expect("pool is nonempty");

    let (chromosome, outcome_objectives) = &merged[winner];
    let avg_vis = match visibility {
        Some(vis) => Some(avg_visibility(
            &ctx.camera_views(chromosome),
            vis.state_grids,
            &vis.target.world_points,
            vis.epsilon,
        )?),
        None => None,
    };
    Ok(SelectionOutcome {
        candidate_ids: candidate_ids(ctx, chromosome),
        positions: chromosome.clone(),
        coverage: outcome_objectives.coverage,
        distance: outcome_objectives.distance,
        view_distances: chromosome.iter().map(|&g| ctx.view_distances[g]).collect(),
        avg_visibility: avg_vis,
        below_threshold,
    })
}

fn candidate_ids(ctx: &EvalContext, chromosome: &[usize]) -> Vec<usize> {
    chromosome.iter().map(|&g| ctx.candidates[g].id).collect()
}
