//! Budgeted, resumable experiment runs and their on-disk layout.
//!
//! An output directory holds `config.toml`, `checkpoint.json`,
//! `history.jsonl`, `phv_curve.csv` and, once the budget is spent,
//! `summary.json`.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::acquisition::{AcquisitionKind, BetaMode};
use crate::domain::Bounds;
use crate::engine::{
    pareto_archive, uniform, ConstraintSpec, EngineError, EvaluationRecord, Evaluator,
    ObjectiveSpec, Optimizer, OptimizerConfig, ProblemSpec, Provenance,
};
use crate::gp::GpConfig;
use crate::nsga::{total_violation, Fitness, Nsga2, NsgaConfig};
use crate::pareto::{dominates, hypervolume, ArchivePoint, MAX_HYPERVOLUME_OBJECTIVES};
use crate::seeding;

use super::config::{Algorithm, ExperimentConfig, EXTERNAL_PROBLEM};
use super::external::ExternalEvaluator;
use super::history::{read_history, HistoryHeader, HistoryLine, HistoryLog, HistoryWriter, HISTORY_SCHEMA, HISTORY_VERSION};
use super::problems::{benchmark, BenchmarkOptions};
use super::HarnessError;

pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const CURVE_FILE: &str = "phv_curve.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub evaluations: usize,
    pub wall_time_secs: f64,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub problem: String,
    pub algorithm: String,
    pub seed: u64,
    pub evaluations: usize,
    pub feasible_count: usize,
    pub final_phv: Option<f64>,
    pub wall_time_secs: f64,
    pub reference_point: Option<Vec<f64>>,
    pub pareto_set: Vec<ArchivePoint>,
}

/// A problem ready to run: specification, hypervolume reference and evaluator.
pub struct Setup {
    pub problem: Arc<ProblemSpec>,
    pub reference_point: Option<Vec<f64>>,
    pub evaluator: Box<dyn Evaluator>,
}

impl std::fmt::Debug for Setup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Setup")
            .field("problem", &self.problem)
            .field("reference_point", &self.reference_point)
            .finish()
    }
}

pub fn prepare(config: &ExperimentConfig) -> Result<Setup, HarnessError> {
    config.validate()?;
    let problem = prepare_spec(config)?;
    let (default_reference, evaluator): (Option<Vec<f64>>, Box<dyn Evaluator>) =
        if config.problem == EXTERNAL_PROBLEM {
            let command = config.evaluator_command.clone().unwrap_or_default();
            let evaluator = ExternalEvaluator::spawn(
                &command,
                Duration::from_secs_f64(config.evaluator_timeout_secs),
                problem.objective_count(),
                problem.blackbox_count(),
            )
            .map_err(|e| HarnessError::Config(format!("cannot start evaluator {command:?}: {e}")))?;
            (None, Box::new(evaluator))
        } else {
            let bench = benchmark(&config.problem, &benchmark_options(config))?;
            (bench.reference_point.clone(), Box::new(bench.evaluator()))
        };

    let k = problem.objective_count();
    let reference_point = match config.reference_point.clone().or(default_reference) {
        Some(r) if r.len() != k => {
            return Err(HarnessError::Config(format!(
                "reference_point has {} entries for {k} objectives",
                r.len()
            )))
        }
        Some(_) if k > MAX_HYPERVOLUME_OBJECTIVES => {
            log::warn!("hypervolume is not tracked for {k} objectives");
            None
        }
        other => other,
    };
    Ok(Setup {
        problem: Arc::new(problem),
        reference_point,
        evaluator,
    })
}

pub fn optimizer_config(config: &ExperimentConfig) -> OptimizerConfig {
    OptimizerConfig {
        acquisition: match config.algorithm {
            Algorithm::UsemocLcb => AcquisitionKind::Lcb,
            _ => AcquisitionKind::Ei,
        },
        beta: config.beta_fixed.map_or(BetaMode::Adaptive, BetaMode::Fixed),
        beta_delta: config.beta_delta,
        nsga: NsgaConfig {
            population_size: config.nsga_population,
            generations: config.nsga_generations,
            crossover_probability: config.nsga_crossover_probability,
            mutation_probability: config.nsga_mutation_probability,
            sbx_eta: config.nsga_sbx_eta,
            mutation_eta: config.nsga_mutation_eta,
            seed: 0,
        },
        gp: GpConfig {
            restarts: config.gp_restarts,
            max_evals: config.gp_max_evals,
            ..GpConfig::default()
        },
        ..OptimizerConfig::default()
    }
}

/// Starts a run in `out`, or resumes it when `out` already holds a run with
/// the same configuration hash.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<RunSummary, HarnessError> {
    config.validate()?;
    if out.join(CHECKPOINT_FILE).exists() {
        let checkpoint = read_checkpoint(out)?;
        if checkpoint.config_hash != config.hash() {
            return Err(HarnessError::ConfigMismatch {
                diff: checkpoint.config.diff(config),
            });
        }
        return resume_experiment(out);
    }
    if out.join(HISTORY_FILE).exists() {
        return Err(HarnessError::Config(format!(
            "{} holds a history without a checkpoint; refusing to overwrite it",
            out.display()
        )));
    }
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let mut stored = config.clone();
    stored.output_dir = Some(out.to_path_buf());
    write_file(&out.join(CONFIG_FILE), stored.to_toml().as_bytes())?;
    let checkpoint = Checkpoint {
        config_hash: config.hash(),
        evaluations: 0,
        wall_time_secs: 0.0,
        config: stored,
    };
    write_checkpoint(out, &checkpoint)?;
    execute(checkpoint, out, None)
}

/// Continues the run stored in `out` from its last complete history line.
pub fn resume_experiment(out: &Path) -> Result<RunSummary, HarnessError> {
    let checkpoint = read_checkpoint(out)?;
    let on_disk = ExperimentConfig::load(&out.join(CONFIG_FILE))?;
    if on_disk.hash() != checkpoint.config_hash {
        return Err(HarnessError::ConfigMismatch {
            diff: checkpoint.config.diff(&on_disk),
        });
    }
    let log = read_history(&out.join(HISTORY_FILE))?;
    if log.header.config_hash != checkpoint.config_hash {
        return Err(HarnessError::History(format!(
            "history belongs to configuration {}, checkpoint to {}",
            log.header.config_hash, checkpoint.config_hash
        )));
    }
    if log.dropped_partial {
        log::warn!("dropping a partially written history line");
    }
    execute(checkpoint, out, Some(log))
}

/// Summary of the run in `out` computed from its history.
pub fn summarize(out: &Path) -> Result<RunSummary, HarnessError> {
    let checkpoint = read_checkpoint(out)?;
    let log = read_history(&out.join(HISTORY_FILE))?;
    let problem = prepare_spec(&checkpoint.config)?;
    Ok(build_summary(
        &checkpoint.config,
        &problem,
        &log.records(),
        log.header.reference_point.clone(),
        log.lines.last().and_then(|l| l.phv),
        checkpoint.wall_time_secs,
    ))
}

pub fn read_checkpoint(out: &Path) -> Result<Checkpoint, HarnessError> {
    let path = out.join(CHECKPOINT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::History(format!("{}: {e}", path.display())))
}

fn write_checkpoint(out: &Path, checkpoint: &Checkpoint) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(checkpoint).expect("checkpoint serializes");
    write_atomic(&out.join(CHECKPOINT_FILE), text.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let tmp = path.with_extension("tmp");
    let mut file = File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?;
    file.write_all(bytes)
        .and_then(|_| file.sync_data())
        .map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

fn benchmark_options(config: &ExperimentConfig) -> BenchmarkOptions {
    BenchmarkOptions {
        vr_band_epsilon: config.vr_band_epsilon,
    }
}

/// The problem specification without starting an evaluator process.
pub fn prepare_spec(config: &ExperimentConfig) -> Result<ProblemSpec, HarnessError> {
    if config.problem == EXTERNAL_PROBLEM {
        let bounds = Bounds::new(
            config.external_lower.clone().unwrap_or_default(),
            config.external_upper.clone().unwrap_or_default(),
        )
        .map_err(|e| HarnessError::Config(format!("external box: {e}")))?;
        let objectives = config
            .external_objectives
            .iter()
            .flatten()
            .map(|name| match name.strip_prefix("max:") {
                Some(n) => ObjectiveSpec::maximize(n),
                None => ObjectiveSpec::minimize(name.strip_prefix("min:").unwrap_or(name)),
            })
            .collect();
        let constraints = (1..=config.external_constraints)
            .map(|j| ConstraintSpec::black_box(format!("c{j}")))
            .collect();
        Ok(ProblemSpec::new(bounds, objectives, constraints, config.budget, config.n_init)?)
    } else {
        let bench = benchmark(&config.problem, &benchmark_options(config))?;
        Ok(bench.problem_spec(config.budget, config.n_init)?)
    }
}

fn build_summary(
    config: &ExperimentConfig,
    problem: &ProblemSpec,
    records: &[EvaluationRecord],
    reference_point: Option<Vec<f64>>,
    final_phv: Option<f64>,
    wall_time_secs: f64,
) -> RunSummary {
    let archive = pareto_archive(problem, records, reference_point.clone());
    RunSummary {
        problem: config.problem.clone(),
        algorithm: config.algorithm.to_string(),
        seed: config.seed.unwrap_or_default(),
        evaluations: records.len(),
        feasible_count: records.iter().filter(|r| r.feasible).count(),
        final_phv,
        wall_time_secs,
        reference_point,
        pareto_set: archive.points,
    }
}

/// Persists every evaluation: history line, curve row and checkpoint.
struct Recorder {
    out: PathBuf,
    history_path: PathBuf,
    writer: HistoryWriter,
    curve: File,
    problem: Arc<ProblemSpec>,
    reference: Option<Vec<f64>>,
    front: Vec<Vec<f64>>,
    phv: Option<f64>,
    records: Vec<EvaluationRecord>,
    checkpoint: Checkpoint,
    started: Instant,
}

impl Recorder {
    fn open(
        out: &Path,
        checkpoint: Checkpoint,
        problem: Arc<ProblemSpec>,
        reference: Option<Vec<f64>>,
        log: Option<HistoryLog>,
    ) -> Result<Self, HarnessError> {
        let history_path = out.join(HISTORY_FILE);
        let (writer, lines) = match log {
            Some(log) => (HistoryWriter::append_to(&history_path, log.valid_len)?, log.lines),
            None => {
                let header = HistoryHeader {
                    schema: HISTORY_SCHEMA.into(),
                    version: HISTORY_VERSION,
                    config_hash: checkpoint.config_hash.clone(),
                    problem: checkpoint.config.problem.clone(),
                    algorithm: checkpoint.config.algorithm.to_string(),
                    seed: checkpoint.config.seed()?,
                    objectives: problem.objectives.iter().map(|o| o.name.clone()).collect(),
                    reference_point: reference.clone(),
                };
                (HistoryWriter::create(&history_path, &header)?, Vec::new())
            }
        };
        let curve_path = out.join(CURVE_FILE);
        let curve = File::create(&curve_path).map_err(|e| HarnessError::io(&curve_path, e))?;
        let mut recorder = Self {
            out: out.to_path_buf(),
            history_path,
            writer,
            curve,
            phv: reference.as_ref().map(|_| 0.0),
            problem,
            reference,
            front: Vec::new(),
            records: Vec::new(),
            checkpoint,
            started: Instant::now(),
        };
        recorder.write_curve_row("evaluation_index,phv")?;
        for line in lines {
            recorder.track(&line.record)?;
            recorder.records.push(line.record);
            recorder.write_curve_row(&curve_row(recorder.records.len(), recorder.phv))?;
        }
        Ok(recorder)
    }

    fn track(&mut self, record: &EvaluationRecord) -> Result<(), HarnessError> {
        let Some(reference) = &self.reference else {
            return Ok(());
        };
        let y = self.problem.internal_objectives(&record.y);
        if record.feasible && !self.front.iter().any(|p| dominates(p, &y) || *p == y) {
            self.front.retain(|p| !dominates(&y, p));
            self.front.push(y);
            self.phv = Some(hypervolume(&self.front, reference)?);
        }
        Ok(())
    }

    fn write_curve_row(&mut self, row: &str) -> Result<(), HarnessError> {
        writeln!(self.curve, "{row}").map_err(|e| HarnessError::io(&self.out.join(CURVE_FILE), e))
    }

    fn len(&self) -> usize {
        self.records.len()
    }

    fn wall_time(&self) -> f64 {
        self.checkpoint.wall_time_secs + self.started.elapsed().as_secs_f64()
    }

    fn append(&mut self, record: EvaluationRecord) -> Result<(), HarnessError> {
        self.track(&record)?;
        let line = HistoryLine {
            index: self.records.len(),
            record,
            phv: self.phv,
        };
        self.writer.append(&self.history_path, &line)?;
        self.records.push(line.record);
        self.write_curve_row(&curve_row(self.records.len(), self.phv))?;
        let mut checkpoint = self.checkpoint.clone();
        checkpoint.evaluations = self.records.len();
        checkpoint.wall_time_secs = self.wall_time();
        write_checkpoint(&self.out, &checkpoint)
    }

    fn finish(self) -> Result<RunSummary, HarnessError> {
        let wall = self.wall_time();
        let mut checkpoint = self.checkpoint.clone();
        checkpoint.evaluations = self.records.len();
        checkpoint.wall_time_secs = wall;
        write_checkpoint(&self.out, &checkpoint)?;
        let summary = build_summary(
            &self.checkpoint.config,
            &self.problem,
            &self.records,
            self.reference.clone(),
            self.phv,
            wall,
        );
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        write_atomic(&self.out.join(SUMMARY_FILE), text.as_bytes())?;
        Ok(summary)
    }
}

fn curve_row(evaluations: usize, phv: Option<f64>) -> String {
    match phv {
        Some(v) => format!("{evaluations},{v}"),
        None => format!("{evaluations},"),
    }
}

fn execute(checkpoint: Checkpoint, out: &Path, log: Option<HistoryLog>) -> Result<RunSummary, HarnessError> {
    let config = checkpoint.config.clone();
    let seed = config.seed()?;
    let Setup {
        problem,
        reference_point,
        mut evaluator,
    } = prepare(&config)?;
    if let Some(log) = &log {
        if log.lines.len() > problem.budget {
            return Err(HarnessError::History("history is longer than the budget".into()));
        }
    }
    let mut recorder = Recorder::open(out, checkpoint, Arc::clone(&problem), reference_point, log)?;
    let evaluator: &mut dyn Evaluator = evaluator.as_mut();
    match config.algorithm {
        Algorithm::UsemocEi | Algorithm::UsemocLcb => {
            let mut opt = Optimizer::from_history(
                Arc::clone(&problem),
                optimizer_config(&config),
                seed,
                recorder.records.clone(),
            )?;
            while !opt.is_complete() {
                let record = opt.next(evaluator)?;
                recorder.append(record)?;
            }
        }
        Algorithm::RandomSearch => random_search(&problem, seed, evaluator, &mut recorder)?,
        Algorithm::Nsga2Direct => nsga2_direct(&problem, &config, seed, evaluator, &mut recorder)?,
    }
    recorder.finish()
}

/// The `i`-th random-search input.
pub fn random_search_point(bounds: &Bounds, seed: u64, index: usize) -> Vec<f64> {
    uniform(bounds, &mut seeding::stream(seed, "random-search", &[index as u64]))
}

fn observe(
    problem: &ProblemSpec,
    evaluator: &mut dyn Evaluator,
    x: Vec<f64>,
    iteration: usize,
    provenance: Provenance,
) -> Result<EvaluationRecord, EngineError> {
    let obs = evaluator.evaluate(&x).map_err(|source| EngineError::Evaluation {
        x: x.clone(),
        source,
    })?;
    problem
        .check_observation(&obs)
        .map_err(|reason| EngineError::InvalidObservation { x: x.clone(), reason })?;
    Ok(EvaluationRecord::new(problem, x, obs, iteration, provenance))
}

fn random_search(
    problem: &ProblemSpec,
    seed: u64,
    evaluator: &mut dyn Evaluator,
    recorder: &mut Recorder,
) -> Result<(), HarnessError> {
    for (index, r) in recorder.records.iter().enumerate() {
        if r.x != random_search_point(&problem.bounds, seed, index) {
            return Err(EngineError::HistoryMismatch {
                index,
                reason: "input differs from the random-search stream".into(),
            }
            .into());
        }
    }
    for index in recorder.len()..problem.budget {
        let x = random_search_point(&problem.bounds, seed, index);
        let record = observe(problem, evaluator, x, index + 1, Provenance::Random)?;
        recorder.append(record)?;
    }
    Ok(())
}

enum DirectStop {
    Budget,
    Failed(HarnessError),
}

/// NSGA-II on the expensive functions; logged evaluations are replayed
/// instead of re-evaluated so a resumed run continues the same search.
struct DirectFitness<'a> {
    problem: &'a ProblemSpec,
    evaluator: &'a mut dyn Evaluator,
    recorder: &'a mut Recorder,
    population: usize,
    count: usize,
}

impl Fitness for DirectFitness<'_> {
    type Error = DirectStop;

    fn evaluate(&mut self, genome: &[f64]) -> Result<(Vec<f64>, f64), DirectStop> {
        let index = self.count;
        if index >= self.problem.budget {
            return Err(DirectStop::Budget);
        }
        let record = if let Some(r) = self.recorder.records.get(index) {
            if r.x != genome {
                return Err(DirectStop::Failed(
                    EngineError::HistoryMismatch {
                        index,
                        reason: "input differs from the replayed search".into(),
                    }
                    .into(),
                ));
            }
            r.clone()
        } else {
            let record = observe(
                self.problem,
                self.evaluator,
                genome.to_vec(),
                index / self.population,
                Provenance::Nsga2,
            )
            .map_err(|e| DirectStop::Failed(e.into()))?;
            self.recorder
                .append(record.clone())
                .map_err(DirectStop::Failed)?;
            record
        };
        self.count += 1;
        Ok((
            self.problem.internal_objectives(&record.y),
            total_violation(&record.c),
        ))
    }
}

fn nsga2_direct(
    problem: &ProblemSpec,
    config: &ExperimentConfig,
    seed: u64,
    evaluator: &mut dyn Evaluator,
    recorder: &mut Recorder,
) -> Result<(), HarnessError> {
    let nsga_config = NsgaConfig {
        population_size: config.direct_population,
        generations: 1,
        seed: seeding::derive_seed(seed, "nsga2-direct", &[]),
        ..optimizer_config(config).nsga
    };
    let fitness = DirectFitness {
        problem,
        evaluator,
        recorder,
        population: config.direct_population,
        count: 0,
    };
    let mut solver = Nsga2::new(problem.bounds.clone(), nsga_config, fitness)
        .map_err(|e| HarnessError::Engine(e.into()))?;
    let mut outcome = solver.initialize();
    while outcome.is_ok() {
        outcome = solver.next_generation();
    }
    match outcome {
        Err(DirectStop::Budget) => Ok(()),
        Err(DirectStop::Failed(e)) => Err(e),
        Ok(()) => unreachable!("the loop only exits on error"),
    }
}
