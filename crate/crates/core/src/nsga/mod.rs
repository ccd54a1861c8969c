//! Constrained NSGA-II.
//!
//! The same driver solves the cheap acquisition problem built by the
//! optimizer ([`solve`]) and runs directly on expensive functions as a
//! baseline (through a fallible [`Fitness`]).

mod sort;
mod variation;

use std::convert::Infallible;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::domain::Bounds;
use crate::seeding;

pub use sort::{constrained_dominates, crowding_distance, fast_non_dominated_sort};
pub use variation::variation;

/// Genomes closer than this (infinity norm, unit-cube coordinates) are duplicates.
pub const DUPLICATE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NsgaError {
    #[error("population size must be even and at least 4, got {0}")]
    PopulationSize(usize),
    #[error("generations must be positive")]
    Generations,
    #[error("{name} must lie in [0, 1], got {value}")]
    Probability { name: &'static str, value: f64 },
    #[error("{name} must be positive, got {value}")]
    DistributionIndex { name: &'static str, value: f64 },
    #[error("cheap problem needs at least one objective")]
    NoObjectives,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NsgaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_probability: f64,
    /// Per-variable mutation probability; `None` means `1 / d`.
    pub mutation_probability: Option<f64>,
    pub sbx_eta: f64,
    pub mutation_eta: f64,
    pub seed: u64,
}

impl Default for NsgaConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            generations: 100,
            crossover_probability: 0.9,
            mutation_probability: None,
            sbx_eta: 15.0,
            mutation_eta: 20.0,
            seed: 0,
        }
    }
}

impl NsgaConfig {
    pub fn validate(&self) -> Result<(), NsgaError> {
        if self.population_size < 4 || !self.population_size.is_multiple_of(2) {
            return Err(NsgaError::PopulationSize(self.population_size));
        }
        if self.generations == 0 {
            return Err(NsgaError::Generations);
        }
        let probs = [
            ("crossover_probability", Some(self.crossover_probability)),
            ("mutation_probability", self.mutation_probability),
        ];
        for (name, value) in probs {
            if let Some(value) = value {
                if !(0.0..=1.0).contains(&value) {
                    return Err(NsgaError::Probability { name, value });
                }
            }
        }
        for (name, value) in [("sbx_eta", self.sbx_eta), ("mutation_eta", self.mutation_eta)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(NsgaError::DistributionIndex { name, value });
            }
        }
        Ok(())
    }

    pub fn mutation_rate(&self, dim: usize) -> f64 {
        self.mutation_probability
            .unwrap_or(1.0 / dim.max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Vec<f64>,
    pub objectives: Vec<f64>,
    /// Total violation `sum(max(g_j, 0))`.
    pub violation: f64,
    pub rank: usize,
    pub crowding: f64,
}

impl Individual {
    pub fn new(genome: Vec<f64>, objectives: Vec<f64>, violation: f64) -> Self {
        Self {
            genome,
            objectives,
            violation,
            rank: 0,
            crowding: 0.0,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.violation <= 0.0
    }
}

/// Scores a genome: objective vector (minimized) and total constraint violation.
pub trait Fitness {
    type Error;

    fn evaluate(&mut self, genome: &[f64]) -> Result<(Vec<f64>, f64), Self::Error>;
}

pub type CheapFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Multi-objective problem over cheap, deterministic functions; constraints
/// follow the `g(x) <= 0` convention.
#[derive(Clone)]
pub struct CheapProblem {
    pub bounds: Bounds,
    pub objectives: Vec<CheapFn>,
    pub constraints: Vec<CheapFn>,
}

impl std::fmt::Debug for CheapProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CheapProblem")
            .field("bounds", &self.bounds)
            .field("objectives", &self.objectives.len())
            .field("constraints", &self.constraints.len())
            .finish()
    }
}

impl CheapProblem {
    pub fn new(
        bounds: Bounds,
        objectives: Vec<CheapFn>,
        constraints: Vec<CheapFn>,
    ) -> Result<Self, NsgaError> {
        if objectives.is_empty() {
            return Err(NsgaError::NoObjectives);
        }
        Ok(Self {
            bounds,
            objectives,
            constraints,
        })
    }

    pub fn objective_values(&self, x: &[f64]) -> Vec<f64> {
        self.objectives
            .iter()
            .map(|f| {
                let v = f(x);
                if v.is_nan() {
                    f64::INFINITY
                } else {
                    v
                }
            })
            .collect()
    }

    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        self.constraints.iter().map(|g| g(x)).collect()
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        total_violation(&self.constraint_values(x))
    }
}

/// `sum(max(g_j, 0))`; a NaN constraint value counts as infinitely violated.
pub fn total_violation(values: &[f64]) -> f64 {
    values
        .iter()
        .map(|&g| if g.is_nan() { f64::INFINITY } else { g.max(0.0) })
        .sum()
}

impl Fitness for &CheapProblem {
    type Error = Infallible;

    fn evaluate(&mut self, genome: &[f64]) -> Result<(Vec<f64>, f64), Infallible> {
        Ok((self.objective_values(genome), self.violation(genome)))
    }
}

/// Generational NSGA-II with (mu + lambda) elitist survival.
pub struct Nsga2<F> {
    bounds: Bounds,
    config: NsgaConfig,
    fitness: F,
    rng: seeding::Rng,
    population: Vec<Individual>,
    generation: usize,
}

impl<F: Fitness> Nsga2<F> {
    pub fn new(bounds: Bounds, config: NsgaConfig, fitness: F) -> Result<Self, NsgaError> {
        config.validate()?;
        let rng = seeding::stream(config.seed, "nsga2", &[]);
        Ok(Self {
            bounds,
            config,
            fitness,
            rng,
            population: Vec::new(),
            generation: 0,
        })
    }

    /// Draws and evaluates the uniform random initial population.
    pub fn initialize(&mut self) -> Result<(), F::Error> {
        let n = self.config.population_size;
        let mut population = Vec::with_capacity(n);
        for _ in 0..n {
            let genome: Vec<f64> = (0..self.bounds.dim())
                .map(|i| self.rng.gen_range(self.bounds.lower()[i]..=self.bounds.upper()[i]))
                .collect();
            population.push(self.score(genome)?);
        }
        self.population = survive(population, n);
        Ok(())
    }

    pub fn next_generation(&mut self) -> Result<(), F::Error> {
        let n = self.config.population_size;
        let mut genomes = Vec::with_capacity(n);
        while genomes.len() < n {
            let a = self.tournament();
            let b = self.tournament();
            let (c1, c2) = variation(
                &self.population[a].genome,
                &self.population[b].genome,
                &self.bounds,
                &self.config,
                &mut self.rng,
            );
            genomes.push(c1);
            genomes.push(c2);
        }
        let mut combined = std::mem::take(&mut self.population);
        for genome in genomes {
            combined.push(self.score(genome)?);
        }
        self.population = survive(combined, n);
        self.generation += 1;
        Ok(())
    }

    pub fn population(&self) -> &[Individual] {
        &self.population
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn fitness(&self) -> &F {
        &self.fitness
    }

    /// Members of the current first front.
    pub fn first_front(&self) -> impl Iterator<Item = &Individual> {
        self.population.iter().filter(|i| i.rank == 0)
    }

    fn score(&mut self, genome: Vec<f64>) -> Result<Individual, F::Error> {
        let (objectives, violation) = self.fitness.evaluate(&genome)?;
        Ok(Individual::new(genome, objectives, violation))
    }

    fn tournament(&mut self) -> usize {
        let n = self.population.len();
        let i = self.rng.gen_range(0..n);
        let j = self.rng.gen_range(0..n);
        let (a, b) = (&self.population[i], &self.population[j]);
        if b.rank < a.rank || (b.rank == a.rank && b.crowding > a.crowding) {
            j
        } else {
            i
        }
    }
}

/// Keeps `n` individuals by front, breaking the last front by crowding.
fn survive(combined: Vec<Individual>, n: usize) -> Vec<Individual> {
    let fronts = fast_non_dominated_sort(&combined);
    let mut slots: Vec<Option<Individual>> = combined.into_iter().map(Some).collect();
    let mut next = Vec::with_capacity(n);
    for (rank, front) in fronts.into_iter().enumerate() {
        if next.len() >= n {
            break;
        }
        let distances = {
            let objs: Vec<&[f64]> = front
                .iter()
                .map(|&i| slots[i].as_ref().expect("unused").objectives.as_slice())
                .collect();
            crowding_distance(&objs)
        };
        let mut members: Vec<(usize, f64)> = front.into_iter().zip(distances).collect();
        if next.len() + members.len() > n {
            members.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            members.truncate(n - next.len());
        }
        for (i, crowding) in members {
            let mut ind = slots[i].take().expect("each index appears in one front");
            ind.rank = rank;
            ind.crowding = crowding;
            next.push(ind);
        }
    }
    next
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub genome: Vec<f64>,
    pub objectives: Vec<f64>,
    pub violation: f64,
}

/// First front of the final population, deduplicated and sorted by genome.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub members: Vec<Candidate>,
    /// Set when no member satisfies the cheap constraints.
    pub all_infeasible: bool,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub fn solve(problem: &CheapProblem, config: &NsgaConfig) -> Result<CandidateSet, NsgaError> {
    let mut nsga = Nsga2::new(problem.bounds.clone(), config.clone(), problem)?;
    let Ok(()) = nsga.initialize();
    for _ in 0..config.generations {
        let Ok(()) = nsga.next_generation();
    }
    Ok(candidates_from_front(nsga.first_front(), &problem.bounds))
}

pub(crate) fn candidates_from_front<'a>(
    front: impl Iterator<Item = &'a Individual>,
    bounds: &Bounds,
) -> CandidateSet {
    let mut members: Vec<Candidate> = Vec::new();
    for ind in front {
        if members
            .iter()
            .any(|m| bounds.normalized_distance(&m.genome, &ind.genome) < DUPLICATE_TOL)
        {
            continue;
        }
        members.push(Candidate {
            genome: ind.genome.clone(),
            objectives: ind.objectives.clone(),
            violation: ind.violation,
        });
    }
    members.sort_by(|a, b| lexicographic(&a.genome, &b.genome));
    let all_infeasible = !members.is_empty() && members.iter().all(|m| m.violation > 0.0);
    CandidateSet {
        members,
        all_infeasible,
    }
}

pub(crate) fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}
