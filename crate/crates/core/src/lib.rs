//! Constrained multi-objective Bayesian optimization.
//!
//! The optimizer keeps one Gaussian-process surrogate per objective (and per
//! blackbox constraint), solves a cheap constrained multi-objective problem
//! over acquisition functions with NSGA-II, and evaluates the candidate from
//! the resulting Pareto set whose uncertainty hyperrectangle is largest.
//!
//! Module map:
//!
//! * [`gp`] - Gaussian-process regression with an ARD squared-exponential kernel.
//! * [`acquisition`] - EI / UCB / LCB, the exploration schedule and the uncertainty volume.
//! * [`nsga`] - constrained NSGA-II used as the inner solver and as a baseline.
//! * [`engine`] - problem definitions and the optimization loop.
//! * [`pareto`] - dominance, hypervolume and the gain-in-evaluations metric.
//! * [`bench`] - benchmark problems, external evaluators, experiment runner.

pub mod acquisition;
pub mod bench;
pub mod domain;
pub mod engine;
pub mod gp;
pub mod nsga;
pub mod pareto;
pub mod seeding;

mod optim;

pub use domain::Bounds;
pub use engine::{
    ConstraintKind, ConstraintSpec, EvaluationRecord, Evaluator, ObjectiveSpec, Observation,
    Optimizer, OptimizerConfig, ProblemSpec, Provenance, Sense,
};
pub use gp::{GpConfig, GpModel, KernelParams};
pub use pareto::{hypervolume, pareto_filter, HypervolumeCurve, ParetoArchive};
