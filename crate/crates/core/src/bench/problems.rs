//! Closed-form constrained benchmarks and a synthetic voltage-regulator problem.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::domain::Bounds;
use crate::engine::{
    ConstraintSpec, EngineError, EvaluationError, ObjectiveSpec, Observation, ProblemSpec,
};

use super::HarnessError;

pub type ObjectiveFn = Arc<dyn Fn(&[f64]) -> Observation + Send + Sync>;

/// Names accepted by [`benchmark`].
pub const BENCHMARKS: [&str; 4] = ["bnh", "srn", "tnk", "mock-vr"];

/// Number of capacitors in the mock voltage regulator.
pub const VR_CAPACITORS: usize = 8;
/// Number of regulated outputs in the mock voltage regulator.
pub const VR_OUTPUTS: usize = 4;
/// Target total capacitance of the C0 band constraint.
pub const VR_CAPACITANCE_TARGET: f64 = 20.0;
/// Default half-width of the C0 band.
pub const VR_BAND_EPSILON: f64 = 2.0;
/// Admissible output-ripple window.
pub const VR_RIPPLE_WINDOW: (f64, f64) = (0.5, 10.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkOptions {
    pub vr_band_epsilon: f64,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            vr_band_epsilon: VR_BAND_EPSILON,
        }
    }
}

#[derive(Clone)]
pub struct BenchmarkProblem {
    pub name: &'static str,
    pub bounds: Bounds,
    pub objectives: Vec<ObjectiveSpec>,
    pub constraints: Vec<ConstraintSpec>,
    /// Hypervolume reference in the minimization convention; absent when
    /// the objective count exceeds what the exact hypervolume supports.
    pub reference_point: Option<Vec<f64>>,
    /// Samples `n` points of the analytic Pareto front (declared senses).
    pub front_sampler: Option<fn(usize) -> Vec<Vec<f64>>>,
    function: ObjectiveFn,
}

impl fmt::Debug for BenchmarkProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BenchmarkProblem")
            .field("name", &self.name)
            .field("dim", &self.bounds.dim())
            .field("objectives", &self.objectives.len())
            .field("constraints", &self.constraints.len())
            .finish()
    }
}

impl BenchmarkProblem {
    pub fn problem_spec(&self, budget: usize, n_init: Option<usize>) -> Result<ProblemSpec, EngineError> {
        ProblemSpec::new(
            self.bounds.clone(),
            self.objectives.clone(),
            self.constraints.clone(),
            budget,
            n_init,
        )
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Observation, EvaluationError> {
        if x.len() != self.bounds.dim() || !self.bounds.contains(x) {
            return Err(EvaluationError::OutOfBounds);
        }
        Ok((self.function)(x))
    }

    /// An owned evaluator for the optimization loop.
    pub fn evaluator(&self) -> impl FnMut(&[f64]) -> Result<Observation, EvaluationError> + 'static {
        let this = self.clone();
        move |x: &[f64]| this.evaluate(x)
    }
}

pub fn benchmark(name: &str, options: &BenchmarkOptions) -> Result<BenchmarkProblem, HarnessError> {
    match name {
        "bnh" => Ok(bnh()),
        "srn" => Ok(srn()),
        "tnk" => Ok(tnk()),
        "mock-vr" => mock_vr(options.vr_band_epsilon),
        other => Err(HarnessError::UnknownProblem(other.to_string())),
    }
}

/// Objective values and constraint values `g` (satisfied when `g <= 0`) of a
/// named benchmark at `x`.
pub fn evaluate_benchmark(name: &str, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), HarnessError> {
    let problem = benchmark(name, &BenchmarkOptions::default())?;
    let obs = problem
        .evaluate(x)
        .map_err(|e| HarnessError::Config(format!("{name}: {e}")))?;
    let spec = problem
        .problem_spec(3, Some(2))
        .map_err(HarnessError::Engine)?;
    let c = spec.constraint_values(x, &obs);
    Ok((obs.y, c))
}

fn reference_from_nadir(nadir: &[f64]) -> Vec<f64> {
    nadir.iter().map(|v| v + 0.1 * v.abs()).collect()
}

fn bnh() -> BenchmarkProblem {
    BenchmarkProblem {
        name: "bnh",
        bounds: Bounds::new(vec![0.0, 0.0], vec![5.0, 3.0]).expect("valid box"),
        objectives: vec![ObjectiveSpec::minimize("f1"), ObjectiveSpec::minimize("f2")],
        constraints: vec![ConstraintSpec::black_box("g1"), ConstraintSpec::black_box("g2")],
        reference_point: Some(reference_from_nadir(&[136.0, 50.0])),
        front_sampler: Some(bnh_front),
        function: Arc::new(|x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            Observation {
                y: vec![4.0 * a * a + 4.0 * b * b, (a - 5.0).powi(2) + (b - 5.0).powi(2)],
                c: vec![
                    (a - 5.0).powi(2) + b * b - 25.0,
                    7.7 - (a - 8.0).powi(2) - (b + 3.0).powi(2),
                ],
            }
        }),
    }
}

fn bnh_front(n: usize) -> Vec<Vec<f64>> {
    let n = n.max(2);
    (0..n)
        .map(|i| {
            let s = 5.0 * i as f64 / (n - 1) as f64;
            let (a, b) = if s <= 3.0 { (s, s) } else { (s, 3.0) };
            vec![4.0 * a * a + 4.0 * b * b, (a - 5.0).powi(2) + (b - 5.0).powi(2)]
        })
        .collect()
}

fn srn_top() -> f64 {
    (225.0f64 - 6.25).sqrt()
}

fn srn() -> BenchmarkProblem {
    let top = (srn_top() - 1.0).powi(2);
    BenchmarkProblem {
        name: "srn",
        bounds: Bounds::new(vec![-20.0, -20.0], vec![20.0, 20.0]).expect("valid box"),
        objectives: vec![ObjectiveSpec::minimize("f1"), ObjectiveSpec::minimize("f2")],
        constraints: vec![ConstraintSpec::black_box("g1"), ConstraintSpec::black_box("g2")],
        reference_point: Some(reference_from_nadir(&[22.25 + top, -24.75])),
        front_sampler: Some(srn_front),
        function: Arc::new(|x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            Observation {
                y: vec![
                    (a - 2.0).powi(2) + (b - 1.0).powi(2) + 2.0,
                    9.0 * a - (b - 1.0).powi(2),
                ],
                c: vec![a * a + b * b - 225.0, a - 3.0 * b + 10.0],
            }
        }),
    }
}

fn srn_front(n: usize) -> Vec<Vec<f64>> {
    let n = n.max(2);
    let (lo, hi) = (2.5, srn_top());
    (0..n)
        .map(|i| {
            let b = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let q = (b - 1.0).powi(2);
            vec![20.25 + q + 2.0, -22.5 - q]
        })
        .collect()
}

fn tnk() -> BenchmarkProblem {
    BenchmarkProblem {
        name: "tnk",
        bounds: Bounds::new(vec![0.0, 0.0], vec![PI, PI]).expect("valid box"),
        objectives: vec![ObjectiveSpec::minimize("f1"), ObjectiveSpec::minimize("f2")],
        constraints: vec![ConstraintSpec::black_box("g1"), ConstraintSpec::black_box("g2")],
        reference_point: Some(reference_from_nadir(&[1.04, 1.04])),
        front_sampler: None,
        function: Arc::new(|x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            Observation {
                y: vec![a, b],
                c: vec![
                    -(a * a + b * b - 1.0 - 0.1 * (16.0 * a.atan2(b)).cos()),
                    (a - 0.5).powi(2) + (b - 0.5).powi(2) - 0.5,
                ],
            }
        }),
    }
}

/// Total capacitance `sum_i (1.955 W_i L_i + 0.54 (W_i + L_i)) M_i` of the
/// mock regulator; `x` holds `(W_i, L_i, M_i)` triples first.
pub fn total_capacitance(x: &[f64]) -> f64 {
    (0..VR_CAPACITORS).map(|i| capacitor(x, i)).sum()
}

fn capacitor(x: &[f64], i: usize) -> f64 {
    let (w, l, m) = (x[3 * i], x[3 * i + 1], x[3 * i + 2]);
    (1.955 * w * l + 0.54 * (w + l)) * m
}

/// Synthetic regulator outputs: efficiency (%), four output voltages and
/// four output ripples.
pub fn mock_vr_outputs(x: &[f64]) -> Vec<f64> {
    let vref_at = 3 * VR_CAPACITORS;
    let r_at = vref_at + VR_OUTPUTS;
    let mut voltages = Vec::with_capacity(VR_OUTPUTS);
    let mut ripples = Vec::with_capacity(VR_OUTPUTS);
    let (mut p_out, mut p_loss) = (0.0, 1e-3);
    for p in 0..VR_OUTPUTS {
        let c = capacitor(x, 2 * p) + capacitor(x, 2 * p + 1);
        let vref = x[vref_at + p];
        let current = vref / x[r_at + p];
        let vo = vref + 0.1 * (1.0 - (-c / 3.0).exp()) - 20.0 * current / (c + 1.0);
        voltages.push(vo);
        ripples.push(2000.0 * current / c);
        p_out += vo.max(0.0) * current;
        p_loss += 0.5 * current * current + 2e-4 * c;
    }
    let efficiency = 100.0 * p_out / (p_out + p_loss);
    let mut y = vec![efficiency];
    y.extend(voltages);
    y.extend(ripples);
    y
}

fn mock_vr(epsilon: f64) -> Result<BenchmarkProblem, HarnessError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(HarnessError::Config(format!(
            "vr_band_epsilon must be positive, got {epsilon}"
        )));
    }
    let mut lower = vec![0.5; 3 * VR_CAPACITORS];
    let mut upper = vec![1.5; 3 * VR_CAPACITORS];
    lower.extend([0.5; VR_OUTPUTS]);
    upper.extend([1.2; VR_OUTPUTS]);
    lower.extend([10.0; VR_OUTPUTS]);
    upper.extend([2000.0; VR_OUTPUTS]);

    let mut objectives = vec![ObjectiveSpec::maximize("eff")];
    objectives.extend((1..=VR_OUTPUTS).map(|p| ObjectiveSpec::maximize(format!("vo{p}"))));
    objectives.extend((1..=VR_OUTPUTS).map(|p| ObjectiveSpec::minimize(format!("or{p}"))));

    let mut constraints = vec![ConstraintSpec::band(
        "c0",
        total_capacitance,
        VR_CAPACITANCE_TARGET,
        epsilon,
    )];
    let vref_at = 3 * VR_CAPACITORS;
    for p in 0..VR_OUTPUTS {
        let vo = format!("vo{}", p + 1);
        constraints.push(ConstraintSpec::composite(
            format!("c{}", p + 1),
            &[vo.as_str()],
            move |x: &[f64], v: &[f64]| x[vref_at + p] - v[0],
        ));
    }
    let (lb, ub) = VR_RIPPLE_WINDOW;
    for p in 0..VR_OUTPUTS {
        let or = format!("or{}", p + 1);
        constraints.push(ConstraintSpec::composite(
            format!("c{}", p + 5),
            &[or.as_str()],
            move |_: &[f64], v: &[f64]| (lb - v[0]).max(v[0] - ub),
        ));
    }
    constraints.push(ConstraintSpec::composite("c9", &["eff"], |_: &[f64], v: &[f64]| v[0] - 100.0));

    Ok(BenchmarkProblem {
        name: "mock-vr",
        bounds: Bounds::new(lower, upper).expect("valid box"),
        objectives,
        constraints,
        reference_point: None,
        front_sampler: None,
        function: Arc::new(|x: &[f64]| Observation {
            y: mock_vr_outputs(x),
            c: Vec::new(),
        }),
    })
}
