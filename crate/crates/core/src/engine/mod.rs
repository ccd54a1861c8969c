//! Problem definitions and the uncertainty-aware optimization loop.

mod design;
mod optimizer;
mod problem;

use thiserror::Error;

use crate::acquisition::AcquisitionError;
use crate::gp::GpError;
use crate::nsga::NsgaError;

pub use design::{latin_hypercube, uniform};
pub use optimizer::{
    pareto_archive, run, EvaluationRecord, Optimizer, OptimizerConfig, OptimizerState, Provenance, RunError,
    RunOutcome,
};
pub use problem::{
    default_n_init, is_feasible, CompositeFn, ConstraintKind, ConstraintSpec, EvaluationError,
    Evaluator, ObjectiveSpec, Observation, ProblemSpec, Sense, WhiteBoxFn,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("evaluation failed at x = {x:?}: {source}")]
    Evaluation {
        x: Vec<f64>,
        #[source]
        source: EvaluationError,
    },
    #[error("invalid observation at x = {x:?}: {reason}")]
    InvalidObservation { x: Vec<f64>, reason: String },
    #[error("fitting model `{model}` failed: {source}")]
    Model {
        model: String,
        #[source]
        source: GpError,
    },
    #[error(transparent)]
    Nsga(#[from] NsgaError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error("evaluation budget of {0} is exhausted")]
    BudgetExhausted(usize),
    #[error("every candidate has already been evaluated")]
    CandidatesExhausted,
    #[error("history record {index} does not match this run: {reason}")]
    HistoryMismatch { index: usize, reason: String },
}
