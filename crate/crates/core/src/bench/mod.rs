//! Benchmark problems, the external-evaluator protocol, baselines and
//! persistent, resumable experiment runs.

pub mod compare;
pub mod config;
pub mod experiment;
pub mod external;
pub mod history;
pub mod problems;

use std::path::Path;

use thiserror::Error;

use crate::engine::EngineError;
use crate::pareto::MetricsError;

pub use compare::{compare_dirs, compare_runs, load_run, ComparisonReport, GainEntry, RunCurve};
pub use config::{Algorithm, ExperimentConfig};
pub use experiment::{
    prepare, random_search_point, read_checkpoint, resume_experiment, run_experiment, summarize,
    RunSummary, Setup,
};
pub use external::ExternalEvaluator;
pub use history::{read_history, HistoryHeader, HistoryLine, HistoryLog};
pub use problems::{
    benchmark, evaluate_benchmark, mock_vr_outputs, total_capacitance, BenchmarkOptions,
    BenchmarkProblem, BENCHMARKS,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("configuration differs from the stored run:\n  {}", .diff.join("\n  "))]
    ConfigMismatch { diff: Vec<String> },
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("history error: {0}")]
    History(String),
    #[error("incompatible runs:\n  {}", .0.join("\n  "))]
    Incompatible(Vec<String>),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
