//! Python bindings: surrogate models, acquisition functions, Pareto metrics,
//! benchmarks, the experiment runner and a `minimize` driver that optimizes a
//! Python callable.

use std::cell::RefCell;
use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyTuple};

use usemoc_core::acquisition::{self, AcquisitionKind, BetaSchedule};
use usemoc_core::bench::{self, ExperimentConfig, RunSummary};
use usemoc_core::engine::{self, EvaluationError};
use usemoc_core::gp::NoiseModel;
use usemoc_core::pareto::{self, Gain, HypervolumeCurve};
use usemoc_core::{
    Bounds, ConstraintSpec, EvaluationRecord, GpConfig, GpModel, KernelParams, ObjectiveSpec,
    Observation, OptimizerConfig, ProblemSpec, Provenance,
};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn bounds(lower: Vec<f64>, upper: Vec<f64>) -> PyResult<Bounds> {
    Bounds::new(lower, upper).map_err(value_error)
}

/// Gaussian-process regression with an ARD squared-exponential kernel.
#[pyclass(name = "GaussianProcess", module = "usemoc")]
struct GaussianProcess {
    model: GpModel,
}

#[pymethods]
impl GaussianProcess {
    /// Fits hyperparameters by maximizing the log marginal likelihood.
    /// A `noise` value fixes the noise variance instead of fitting it.
    #[staticmethod]
    #[pyo3(signature = (inputs, targets, lower, upper, *, restarts = 5, seed = 0, noise = None))]
    fn fit(
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        restarts: usize,
        seed: u64,
        noise: Option<f64>,
    ) -> PyResult<Self> {
        let b = bounds(lower, upper)?;
        let mut config = GpConfig { restarts, seed, ..GpConfig::default() };
        if let Some(n) = noise {
            config.noise = NoiseModel::Fixed(n);
        }
        let model = GpModel::fit(&inputs, &targets, &b, &config).map_err(value_error)?;
        Ok(Self { model })
    }

    /// Conditions on data with fixed hyperparameters.
    #[staticmethod]
    #[pyo3(signature = (inputs, targets, lower, upper, lengthscales, signal_variance, noise_variance, *, standardize = true))]
    #[allow(clippy::too_many_arguments)]
    fn with_params(
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        lengthscales: Vec<f64>,
        signal_variance: f64,
        noise_variance: f64,
        standardize: bool,
    ) -> PyResult<Self> {
        let b = bounds(lower, upper)?;
        let params =
            KernelParams::new(lengthscales, signal_variance, noise_variance).map_err(value_error)?;
        let model =
            GpModel::with_params(&inputs, &targets, &b, params, standardize).map_err(value_error)?;
        Ok(Self { model })
    }

    /// Posterior `(mean, std)` at `x`, in the units of the targets.
    fn predict(&self, x: Vec<f64>) -> PyResult<(f64, f64)> {
        let p = self.model.predict(&x).map_err(value_error)?;
        Ok((p.mean, p.std))
    }

    fn predict_many(&self, xs: Vec<Vec<f64>>) -> PyResult<Vec<(f64, f64)>> {
        xs.iter().map(|x| self.predict(x.clone())).collect()
    }

    fn log_marginal_likelihood(&self) -> f64 {
        self.model.log_marginal_likelihood()
    }

    #[getter]
    fn lengthscales(&self) -> Vec<f64> {
        self.model.kernel().lengthscales.clone()
    }

    #[getter]
    fn signal_variance(&self) -> f64 {
        self.model.kernel().signal_variance
    }

    #[getter]
    fn noise_variance(&self) -> f64 {
        self.model.kernel().noise_variance
    }

    fn __len__(&self) -> usize {
        self.model.len()
    }

    fn __repr__(&self) -> String {
        format!("GaussianProcess(n={}, dim={})", self.model.len(), self.model.dim())
    }
}

/// Expected improvement below `tau`.
#[pyfunction]
fn ei(mean: f64, std: f64, tau: f64) -> f64 {
    acquisition::ei(mean, std, tau)
}

/// Logarithm of the expected improvement, accurate far into the tail.
#[pyfunction]
fn log_ei(mean: f64, std: f64, tau: f64) -> f64 {
    acquisition::log_ei(mean, std, tau)
}

#[pyfunction]
fn ucb(mean: f64, std: f64, beta: f64) -> PyResult<f64> {
    acquisition::ucb(mean, std, beta).map_err(value_error)
}

#[pyfunction]
fn lcb(mean: f64, std: f64, beta: f64) -> PyResult<f64> {
    acquisition::lcb(mean, std, beta).map_err(value_error)
}

/// Adaptive exploration weight at iteration `t`.
#[pyfunction]
#[pyo3(signature = (dimension, t, delta = 0.1))]
fn beta_t(dimension: usize, t: usize, delta: f64) -> PyResult<f64> {
    BetaSchedule::adaptive(dimension, delta)
        .and_then(|s| s.beta_t(t))
        .map_err(value_error)
}

/// Volume of the confidence hyperrectangle spanned by posterior deviations.
#[pyfunction]
fn uncertainty_volume(stds: Vec<f64>, beta: f64) -> PyResult<f64> {
    acquisition::uncertainty_volume(&stds, beta).map_err(value_error)
}

/// Exact hypervolume (minimization) of up to four objectives.
#[pyfunction]
fn hypervolume(front: Vec<Vec<f64>>, reference: Vec<f64>) -> PyResult<f64> {
    pareto::hypervolume(&front, &reference).map_err(value_error)
}

/// Indices of the feasible non-dominated points, first occurrence of duplicates kept.
#[pyfunction]
#[pyo3(signature = (ys, feasible = None))]
fn pareto_filter(ys: Vec<Vec<f64>>, feasible: Option<Vec<bool>>) -> PyResult<Vec<usize>> {
    let feasible = feasible.unwrap_or_else(|| vec![true; ys.len()]);
    if feasible.len() != ys.len() {
        return Err(PyValueError::new_err("feasible must have one flag per point"));
    }
    Ok(pareto::pareto_filter(&ys, &feasible))
}

/// Percentage of evaluations saved by `target` to reach the baseline's final
/// hypervolume, or `None` when it never gets there.
#[pyfunction]
fn gain_in_simulations(target: Vec<f64>, baseline: Vec<f64>, reference: Vec<f64>) -> PyResult<Option<f64>> {
    let t = HypervolumeCurve { reference: reference.clone(), values: target };
    let b = HypervolumeCurve { reference, values: baseline };
    match pareto::gain_in_simulations(&t, &b).map_err(value_error)? {
        Gain::Percent(p) => Ok(Some(p)),
        Gain::NotReached => Ok(None),
    }
}

/// Objectives and constraint values of a built-in benchmark at `x`.
#[pyfunction]
fn evaluate_benchmark(name: &str, x: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    bench::evaluate_benchmark(name, &x).map_err(value_error)
}

fn summary_dict<'py>(py: Python<'py>, s: &RunSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("problem", &s.problem)?;
    d.set_item("algorithm", &s.algorithm)?;
    d.set_item("seed", s.seed)?;
    d.set_item("evaluations", s.evaluations)?;
    d.set_item("feasible_count", s.feasible_count)?;
    d.set_item("final_phv", s.final_phv)?;
    d.set_item("wall_time_secs", s.wall_time_secs)?;
    d.set_item("reference_point", s.reference_point.clone())?;
    let front: Vec<(Vec<f64>, Vec<f64>)> =
        s.pareto_set.iter().map(|p| (p.x.clone(), p.y.clone())).collect();
    d.set_item("pareto_set", front)?;
    Ok(d)
}

/// Runs an experiment described by a TOML document and writes its artifacts to `out_dir`.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &str, out_dir: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let config = ExperimentConfig::parse(config).map_err(value_error)?;
    let summary = py
        .detach(|| bench::run_experiment(&config, &out_dir))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    summary_dict(py, &summary)
}

/// Continues an interrupted experiment from its directory.
#[pyfunction]
fn resume_experiment(py: Python<'_>, out_dir: PathBuf) -> PyResult<Bound<'_, PyDict>> {
    let summary = py
        .detach(|| bench::resume_experiment(&out_dir))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    summary_dict(py, &summary)
}

fn provenance_name(p: Provenance) -> &'static str {
    match p {
        Provenance::Init => "init",
        Provenance::Candidate => "candidate",
        Provenance::InfeasibleCandidate => "infeasible-candidate",
        Provenance::Fallback => "fallback",
        Provenance::Random => "random",
        Provenance::Nsga2 => "nsga2",
    }
}

fn record_dict<'py>(py: Python<'py>, r: &EvaluationRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("iteration", r.iteration)?;
    d.set_item("x", r.x.clone())?;
    d.set_item("y", r.y.clone())?;
    d.set_item("c", r.c.clone())?;
    d.set_item("feasible", r.feasible)?;
    d.set_item("provenance", provenance_name(r.provenance))?;
    Ok(d)
}

fn history_list<'py>(py: Python<'py>, history: &[EvaluationRecord]) -> PyResult<Bound<'py, PyList>> {
    let items = history.iter().map(|r| record_dict(py, r)).collect::<PyResult<Vec<_>>>()?;
    PyList::new(py, items)
}

/// Reads `(y, c)` from a callback result; a bare sequence means no constraint outputs.
fn observation(result: &Bound<'_, PyAny>) -> PyResult<Observation> {
    if let Ok(t) = result.cast::<PyTuple>() {
        if t.len() == 2 {
            return Ok(Observation { y: t.get_item(0)?.extract()?, c: t.get_item(1)?.extract()? });
        }
    }
    Ok(Observation { y: result.extract()?, c: Vec::new() })
}

fn white_box(index: usize, g: Py<PyAny>) -> ConstraintSpec {
    ConstraintSpec::white_box(format!("g{index}"), move |x: &[f64]| {
        Python::attach(|py| {
            g.call1(py, (x.to_vec(),))
                .and_then(|v| v.extract::<f64>(py))
                .unwrap_or(f64::INFINITY)
        })
    })
}

/// Optimizes an expensive Python function.
///
/// `func(x)` returns the objective list, or `(objectives, blackbox_outputs)`
/// when `blackbox_constraints > 0`; each blackbox output `c` is satisfied when
/// `c <= 0`. `constraints` are cheap callables `g(x)` with `g(x) <= 0` feasible.
/// `maximize` flags objectives to maximize.
#[pyfunction]
#[pyo3(signature = (
    func, lower, upper, *, n_objectives, budget, blackbox_constraints = 0,
    constraints = Vec::new(), maximize = None, n_init = None, seed = 0, acquisition = "ei",
))]
#[allow(clippy::too_many_arguments)]
fn minimize<'py>(
    py: Python<'py>,
    func: Bound<'py, PyAny>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    n_objectives: usize,
    budget: usize,
    blackbox_constraints: usize,
    constraints: Vec<Py<PyAny>>,
    maximize: Option<Vec<bool>>,
    n_init: Option<usize>,
    seed: u64,
    acquisition: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let b = bounds(lower, upper)?;
    let maximize = maximize.unwrap_or_else(|| vec![false; n_objectives]);
    if maximize.len() != n_objectives {
        return Err(PyValueError::new_err("maximize must have one flag per objective"));
    }
    let objectives = maximize
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let name = format!("f{i}");
            if m { ObjectiveSpec::maximize(name) } else { ObjectiveSpec::minimize(name) }
        })
        .collect();
    let mut specs: Vec<ConstraintSpec> =
        (0..blackbox_constraints).map(|i| ConstraintSpec::black_box(format!("c{i}"))).collect();
    specs.extend(constraints.into_iter().enumerate().map(|(i, g)| white_box(i, g)));
    let problem = ProblemSpec::new(b, objectives, specs, budget, n_init).map_err(value_error)?;
    let acquisition = match acquisition {
        "ei" => AcquisitionKind::Ei,
        "lcb" => AcquisitionKind::Lcb,
        other => return Err(PyValueError::new_err(format!("unknown acquisition {other:?}"))),
    };
    let config = OptimizerConfig { acquisition, ..OptimizerConfig::default() };

    let raised: RefCell<Option<PyErr>> = RefCell::new(None);
    let mut evaluator = |x: &[f64]| -> Result<Observation, EvaluationError> {
        func.call1((x.to_vec(),)).and_then(|r| observation(&r)).map_err(|e| {
            let message = e.to_string();
            *raised.borrow_mut() = Some(e);
            EvaluationError::Failed(message)
        })
    };
    match engine::run(Arc::new(problem), config, seed, &mut evaluator) {
        Ok(outcome) => {
            let d = PyDict::new(py);
            d.set_item("history", history_list(py, &outcome.history)?)?;
            let front: Vec<(Vec<f64>, Vec<f64>)> =
                outcome.archive.points.iter().map(|p| (p.x.clone(), p.y.clone())).collect();
            d.set_item("pareto_set", front)?;
            Ok(d)
        }
        Err(failure) => match raised.into_inner() {
            Some(e) => Err(e),
            None => Err(PyRuntimeError::new_err(failure.to_string())),
        },
    }
}

#[pymodule]
pub fn usemoc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<GaussianProcess>()?;
    m.add_function(wrap_pyfunction!(ei, m)?)?;
    m.add_function(wrap_pyfunction!(log_ei, m)?)?;
    m.add_function(wrap_pyfunction!(ucb, m)?)?;
    m.add_function(wrap_pyfunction!(lcb, m)?)?;
    m.add_function(wrap_pyfunction!(beta_t, m)?)?;
    m.add_function(wrap_pyfunction!(uncertainty_volume, m)?)?;
    m.add_function(wrap_pyfunction!(hypervolume, m)?)?;
    m.add_function(wrap_pyfunction!(pareto_filter, m)?)?;
    m.add_function(wrap_pyfunction!(gain_in_simulations, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(resume_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(minimize, m)?)?;
    Ok(())
}
