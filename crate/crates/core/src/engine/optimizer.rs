use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::acquisition::{self, AcquisitionKind, BetaMode, BetaSchedule};
use crate::gp::{GpConfig, GpModel};
use crate::nsga::{self, lexicographic, CandidateSet, CheapFn, CheapProblem, NsgaConfig, DUPLICATE_TOL};
use crate::pareto::{pareto_filter, ArchivePoint, ParetoArchive};
use crate::seeding;

use super::design::{latin_hypercube, uniform};
use super::problem::{is_feasible, ConstraintKind, Evaluator, Observation, ProblemSpec, Quantity};
use super::EngineError;

/// Why an input was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Initial space-filling design.
    Init,
    /// Member of the cheap Pareto set with maximal uncertainty volume.
    Candidate,
    /// Same, but the whole cheap front violated the cheap constraints.
    InfeasibleCandidate,
    /// Every cheap candidate had been evaluated; best of a random sample.
    Fallback,
    /// Random-search baseline.
    Random,
    /// Direct NSGA-II baseline.
    Nsga2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    /// 0 for the initial design, then the optimization iteration (from 1).
    pub iteration: usize,
    pub x: Vec<f64>,
    /// Objective values in their declared sense.
    pub y: Vec<f64>,
    /// Every constraint value `g` in declaration order (`g <= 0` is satisfied).
    pub c: Vec<f64>,
    pub feasible: bool,
    pub provenance: Provenance,
}

impl EvaluationRecord {
    /// Assesses an observation against the problem's constraints.
    pub fn new(
        problem: &ProblemSpec,
        x: Vec<f64>,
        obs: Observation,
        iteration: usize,
        provenance: Provenance,
    ) -> Self {
        let c = problem.constraint_values(&x, &obs);
        Self {
            iteration,
            feasible: is_feasible(&c),
            x,
            y: obs.y,
            c,
            provenance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub acquisition: AcquisitionKind,
    pub beta: BetaMode,
    pub beta_delta: f64,
    /// Inner solver settings; the seed is replaced per iteration.
    pub nsga: NsgaConfig,
    /// Surrogate settings; the seed is replaced per model and refit.
    pub gp: GpConfig,
    pub fallback_samples: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            acquisition: AcquisitionKind::Ei,
            beta: BetaMode::Adaptive,
            beta_delta: 0.1,
            nsga: NsgaConfig::default(),
            gp: GpConfig::default(),
            fallback_samples: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub history: Vec<EvaluationRecord>,
    pub objective_models: Vec<Arc<GpModel>>,
    /// One model per blackbox constraint, in declaration order.
    pub constraint_models: Vec<Arc<GpModel>>,
    /// Completed optimization iterations (`history.len() - n_init` once initialized).
    pub t: usize,
}

/// The optimization loop. Every random choice is drawn from a stream keyed
/// by the run seed and the iteration, and models are refit from the full
/// history, so the state is a pure function of `(problem, config, seed,
/// history)`.
pub struct Optimizer {
    problem: Arc<ProblemSpec>,
    config: OptimizerConfig,
    schedule: BetaSchedule,
    seed: u64,
    design: Vec<Vec<f64>>,
    state: OptimizerState,
}

impl std::fmt::Debug for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Optimizer")
            .field("seed", &self.seed)
            .field("evaluations", &self.state.history.len())
            .field("t", &self.state.t)
            .finish()
    }
}

impl Optimizer {
    pub fn new(
        problem: Arc<ProblemSpec>,
        config: OptimizerConfig,
        seed: u64,
    ) -> Result<Self, EngineError> {
        problem.validate()?;
        config.nsga.validate()?;
        let schedule = BetaSchedule {
            dimension: problem.dim(),
            delta: config.beta_delta,
            mode: config.beta,
        };
        schedule.validate()?;
        let mut rng = seeding::stream(seed, "init-design", &[]);
        let design = latin_hypercube(problem.n_init, &problem.bounds, &mut rng);
        Ok(Self {
            problem,
            config,
            schedule,
            seed,
            design,
            state: OptimizerState {
                history: Vec::new(),
                objective_models: Vec::new(),
                constraint_models: Vec::new(),
                t: 0,
            },
        })
    }

    /// Rebuilds the state reached after `history`, which must be a prefix of
    /// a run with the same problem, configuration and seed.
    pub fn from_history(
        problem: Arc<ProblemSpec>,
        config: OptimizerConfig,
        seed: u64,
        history: Vec<EvaluationRecord>,
    ) -> Result<Self, EngineError> {
        let mut opt = Self::new(problem, config, seed)?;
        if history.len() > opt.problem.budget {
            return Err(EngineError::HistoryMismatch {
                index: opt.problem.budget,
                reason: "history is longer than the budget".into(),
            });
        }
        for (index, r) in history.iter().enumerate() {
            let mismatch = |reason: String| EngineError::HistoryMismatch { index, reason };
            if index < opt.problem.n_init {
                if r.x != opt.design[index] || r.provenance != Provenance::Init {
                    return Err(mismatch("initial design point differs".into()));
                }
            } else if r.iteration != index + 1 - opt.problem.n_init {
                return Err(mismatch(format!("unexpected iteration {}", r.iteration)));
            }
            if !opt.problem.bounds.contains(&r.x) {
                return Err(mismatch("input outside the box".into()));
            }
            if r.y.len() != opt.problem.objective_count()
                || r.c.len() != opt.problem.constraints.len()
            {
                return Err(mismatch("record shape does not match the problem".into()));
            }
        }
        opt.state.history = history;
        if opt.is_initialized() {
            opt.fit_models()?;
            opt.state.t = opt.state.history.len() - opt.problem.n_init;
        }
        Ok(opt)
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn history(&self) -> &[EvaluationRecord] {
        &self.state.history
    }

    pub fn into_history(self) -> Vec<EvaluationRecord> {
        self.state.history
    }

    pub fn initial_design(&self) -> &[Vec<f64>] {
        &self.design
    }

    pub fn beta_schedule(&self) -> &BetaSchedule {
        &self.schedule
    }

    pub fn is_initialized(&self) -> bool {
        self.state.history.len() >= self.problem.n_init
    }

    pub fn is_complete(&self) -> bool {
        self.state.history.len() >= self.problem.budget
    }

    /// Evaluates the rest of the initial design and fits all models.
    pub fn initialize(&mut self, evaluator: &mut dyn Evaluator) -> Result<(), EngineError> {
        while !self.is_initialized() {
            self.next(evaluator)?;
        }
        Ok(())
    }

    /// Performs exactly one expensive evaluation: the next initial design
    /// point, or one optimization iteration once the design is complete.
    pub fn next(&mut self, evaluator: &mut dyn Evaluator) -> Result<EvaluationRecord, EngineError> {
        if self.is_complete() {
            return Err(EngineError::BudgetExhausted(self.problem.budget));
        }
        if self.is_initialized() {
            return self.step(evaluator);
        }
        let x = self.design[self.state.history.len()].clone();
        let obs = self.evaluate(evaluator, &x)?;
        let record = EvaluationRecord::new(&self.problem, x, obs, 0, Provenance::Init);
        self.state.history.push(record.clone());
        if self.is_initialized() {
            self.fit_models()?;
        }
        Ok(record)
    }

    /// One optimization iteration: solve the cheap problem, pick the most
    /// uncertain candidate, evaluate it and refit every model.
    pub fn step(&mut self, evaluator: &mut dyn Evaluator) -> Result<EvaluationRecord, EngineError> {
        if !self.is_initialized() {
            return Err(EngineError::Config(
                "the initial design has not been evaluated yet".into(),
            ));
        }
        if self.is_complete() {
            return Err(EngineError::BudgetExhausted(self.problem.budget));
        }
        let t = self.state.t + 1;
        let beta = self.schedule.beta_t(t)?;
        let cheap = self.cheap_problem(beta)?;
        let nsga_config = NsgaConfig {
            seed: seeding::derive_seed(self.seed, "cheap-nsga", &[t as u64]),
            ..self.config.nsga.clone()
        };
        let candidates = nsga::solve(&cheap, &nsga_config)?;
        let (x, provenance) = match self.select_with_beta(&candidates, beta) {
            Ok(x) if candidates.all_infeasible => (x, Provenance::InfeasibleCandidate),
            Ok(x) => (x, Provenance::Candidate),
            Err(EngineError::CandidatesExhausted) => (self.fallback(t, beta)?, Provenance::Fallback),
            Err(e) => return Err(e),
        };
        let obs = self.evaluate(evaluator, &x)?;
        let record = EvaluationRecord::new(&self.problem, x, obs, t, provenance);
        self.state.history.push(record.clone());
        self.fit_models()?;
        self.state.t = t;
        Ok(record)
    }

    /// The cheap constrained problem for the next iteration.
    pub fn build_cheap_problem(&self) -> Result<CheapProblem, EngineError> {
        let beta = self.schedule.beta_t(self.state.t + 1)?;
        self.cheap_problem(beta)
    }

    /// Candidate with the largest uncertainty volume at the next iteration's
    /// beta, skipping inputs that were already evaluated.
    pub fn select_candidate(&self, candidates: &CandidateSet) -> Result<Vec<f64>, EngineError> {
        let beta = self.schedule.beta_t(self.state.t + 1)?;
        self.select_with_beta(candidates, beta)
    }

    /// Uncertainty volume of the objective models at `x`.
    pub fn uncertainty(&self, x: &[f64], beta: f64) -> Result<f64, EngineError> {
        self.require_models()?;
        let stds = self
            .state
            .objective_models
            .iter()
            .zip(&self.problem.objectives)
            .map(|(m, o)| {
                m.predict(x)
                    .map(|p| p.std)
                    .map_err(|source| EngineError::Model {
                        model: o.name.clone(),
                        source,
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        Ok(acquisition::uncertainty_volume(&stds, beta)?)
    }

    /// Best observed internal (minimized) value per objective, over feasible
    /// records when any exist.
    pub fn incumbents(&self) -> Vec<f64> {
        let history = &self.state.history;
        let any_feasible = history.iter().any(|r| r.feasible);
        (0..self.problem.objective_count())
            .map(|i| {
                history
                    .iter()
                    .filter(|r| r.feasible || !any_feasible)
                    .map(|r| self.problem.objectives[i].to_internal(r.y[i]))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    pub fn pareto_archive(&self, reference_point: Option<Vec<f64>>) -> ParetoArchive {
        pareto_archive(&self.problem, &self.state.history, reference_point)
    }

    fn require_models(&self) -> Result<(), EngineError> {
        if self.state.objective_models.len() == self.problem.objective_count() {
            Ok(())
        } else {
            Err(EngineError::Config("models have not been fitted".into()))
        }
    }

    fn evaluate(&self, evaluator: &mut dyn Evaluator, x: &[f64]) -> Result<Observation, EngineError> {
        let obs = evaluator
            .evaluate(x)
            .map_err(|source| EngineError::Evaluation {
                x: x.to_vec(),
                source,
            })?;
        self.problem
            .check_observation(&obs)
            .map_err(|reason| EngineError::InvalidObservation {
                x: x.to_vec(),
                reason,
            })?;
        Ok(obs)
    }

    fn fit_models(&mut self) -> Result<(), EngineError> {
        let history = &self.state.history;
        let n = history.len() as u64;
        let xs: Vec<Vec<f64>> = history.iter().map(|r| r.x.clone()).collect();
        let fit = |name: &str, slot: u64, targets: Vec<f64>| {
            let config = GpConfig {
                seed: seeding::derive_seed(self.seed, "gp", &[n, slot]),
                ..self.config.gp.clone()
            };
            GpModel::fit(&xs, &targets, &self.problem.bounds, &config)
                .map(Arc::new)
                .map_err(|source| EngineError::Model {
                    model: name.to_string(),
                    source,
                })
        };

        let mut objective_models = Vec::with_capacity(self.problem.objective_count());
        for (i, o) in self.problem.objectives.iter().enumerate() {
            let targets = history.iter().map(|r| o.to_internal(r.y[i])).collect();
            objective_models.push(fit(&o.name, i as u64, targets)?);
        }
        let k = objective_models.len() as u64;
        let mut constraint_models = Vec::new();
        for (j, pos) in self.problem.blackbox_positions().into_iter().enumerate() {
            let targets = history.iter().map(|r| r.c[pos]).collect();
            constraint_models.push(fit(&self.problem.constraints[pos].name, k + j as u64, targets)?);
        }
        self.state.objective_models = objective_models;
        self.state.constraint_models = constraint_models;
        Ok(())
    }

    fn cheap_problem(&self, beta: f64) -> Result<CheapProblem, EngineError> {
        self.require_models()?;
        let incumbents = self.incumbents();
        let objectives: Vec<CheapFn> = self
            .state
            .objective_models
            .iter()
            .zip(incumbents)
            .map(|(model, tau)| -> CheapFn {
                let model = Arc::clone(model);
                match self.config.acquisition {
                    AcquisitionKind::Ei => Arc::new(move |x: &[f64]| match model.predict(x) {
                        Ok(p) => -acquisition::log_ei(p.mean, p.std, tau),
                        Err(_) => f64::INFINITY,
                    }),
                    AcquisitionKind::Lcb => Arc::new(move |x: &[f64]| {
                        model
                            .predict(x)
                            .ok()
                            .and_then(|p| acquisition::lcb(p.mean, p.std, beta).ok())
                            .unwrap_or(f64::INFINITY)
                    }),
                }
            })
            .collect();

        let mut blackbox = self.state.constraint_models.iter();
        let constraints: Vec<CheapFn> = self
            .problem
            .constraints
            .iter()
            .map(|c| -> CheapFn {
                match &c.kind {
                    ConstraintKind::WhiteBox(g) => Arc::clone(g),
                    ConstraintKind::BlackBox => {
                        let model = Arc::clone(blackbox.next().expect("one model per blackbox constraint"));
                        Arc::new(move |x: &[f64]| model.predict_mean(x).unwrap_or(f64::INFINITY))
                    }
                    ConstraintKind::Composite { inputs, expression } => {
                        let sources: Vec<(Arc<GpModel>, f64)> = inputs
                            .iter()
                            .map(|name| match self.problem.resolve(name).expect("validated") {
                                Quantity::Objective(i) => (
                                    Arc::clone(&self.state.objective_models[i]),
                                    self.problem.objectives[i].from_internal(1.0),
                                ),
                                Quantity::BlackBox(j) => {
                                    (Arc::clone(&self.state.constraint_models[j]), 1.0)
                                }
                            })
                            .collect();
                        let expression = Arc::clone(expression);
                        Arc::new(move |x: &[f64]| {
                            let means: Vec<f64> = sources
                                .iter()
                                .map(|(m, sign)| sign * m.predict_mean(x).unwrap_or(f64::NAN))
                                .collect();
                            expression(x, &means)
                        })
                    }
                }
            })
            .collect();

        Ok(CheapProblem::new(
            self.problem.bounds.clone(),
            objectives,
            constraints,
        )?)
    }

    fn already_evaluated(&self, x: &[f64]) -> bool {
        self.state
            .history
            .iter()
            .any(|r| self.problem.bounds.normalized_distance(&r.x, x) < DUPLICATE_TOL)
    }

    /// Highest volume first, ties by lexicographically smaller input.
    fn most_uncertain<'a>(
        &self,
        points: impl Iterator<Item = &'a Vec<f64>>,
        beta: f64,
    ) -> Result<Vec<f64>, EngineError> {
        let mut scored = Vec::new();
        for x in points {
            scored.push((self.uncertainty(x, beta)?, x));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| lexicographic(a.1, b.1)));
        scored
            .into_iter()
            .map(|(_, x)| x)
            .find(|x| !self.already_evaluated(x))
            .cloned()
            .ok_or(EngineError::CandidatesExhausted)
    }

    fn select_with_beta(&self, candidates: &CandidateSet, beta: f64) -> Result<Vec<f64>, EngineError> {
        self.most_uncertain(candidates.members.iter().map(|c| &c.genome), beta)
    }

    fn fallback(&self, t: usize, beta: f64) -> Result<Vec<f64>, EngineError> {
        let mut rng = seeding::stream(self.seed, "fallback", &[t as u64]);
        let samples: Vec<Vec<f64>> = (0..self.config.fallback_samples.max(1))
            .map(|_| uniform(&self.problem.bounds, &mut rng))
            .collect();
        self.most_uncertain(samples.iter(), beta)
    }
}

/// Feasible non-dominated records (dominance in the minimization convention).
pub fn pareto_archive(
    problem: &ProblemSpec,
    history: &[EvaluationRecord],
    reference_point: Option<Vec<f64>>,
) -> ParetoArchive {
    let internal: Vec<Vec<f64>> = history
        .iter()
        .map(|r| problem.internal_objectives(&r.y))
        .collect();
    let feasible: Vec<bool> = history.iter().map(|r| r.feasible).collect();
    let points = pareto_filter(&internal, &feasible)
        .into_iter()
        .map(|i| ArchivePoint {
            x: history[i].x.clone(),
            y: history[i].y.clone(),
        })
        .collect();
    ParetoArchive {
        points,
        reference_point,
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub archive: ParetoArchive,
    pub history: Vec<EvaluationRecord>,
}

/// A failed run together with every evaluation completed before the failure.
#[derive(Debug, Clone)]
pub struct RunError {
    pub history: Vec<EvaluationRecord>,
    pub error: EngineError,
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "run aborted after {} evaluations: {}",
            self.history.len(),
            self.error
        )
    }
}

impl std::error::Error for RunError {}

/// Initial design followed by optimization iterations until the budget is spent.
pub fn run(
    problem: Arc<ProblemSpec>,
    config: OptimizerConfig,
    seed: u64,
    evaluator: &mut dyn Evaluator,
) -> Result<RunOutcome, RunError> {
    let mut opt = Optimizer::new(problem, config, seed).map_err(|error| RunError {
        history: Vec::new(),
        error,
    })?;
    while !opt.is_complete() {
        if let Err(error) = opt.next(evaluator) {
            return Err(RunError {
                history: opt.into_history(),
                error,
            });
        }
    }
    Ok(RunOutcome {
        archive: opt.pareto_archive(None),
        history: opt.into_history(),
    })
}
