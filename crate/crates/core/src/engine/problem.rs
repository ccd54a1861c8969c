use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Bounds;

use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub name: String,
    pub sense: Sense,
}

impl ObjectiveSpec {
    pub fn minimize(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            sense: Sense::Minimize,
        }
    }

    pub fn maximize(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            sense: Sense::Maximize,
        }
    }

    /// Value in the internal minimization convention.
    pub fn to_internal(&self, value: f64) -> f64 {
        match self.sense {
            Sense::Minimize => value,
            Sense::Maximize => -value,
        }
    }

    pub fn from_internal(&self, value: f64) -> f64 {
        self.to_internal(value)
    }
}

pub type WhiteBoxFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Receives the input and the values of the referenced quantities, in the
/// order they were declared.
pub type CompositeFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// How a constraint `g <= 0` is known.
#[derive(Clone)]
pub enum ConstraintKind {
    /// Closed-form function of the input.
    WhiteBox(WhiteBoxFn),
    /// Returned by the evaluator; surrogate-modeled in the cheap problem.
    /// Blackbox constraints map, in declaration order, onto the evaluator's
    /// constraint outputs.
    BlackBox,
    /// Function of the input and of named objective or blackbox-constraint
    /// outputs; the cheap problem substitutes their predictive means.
    Composite {
        inputs: Vec<String>,
        expression: CompositeFn,
    },
}

impl fmt::Debug for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintKind::WhiteBox(_) => f.write_str("WhiteBox"),
            ConstraintKind::BlackBox => f.write_str("BlackBox"),
            ConstraintKind::Composite { inputs, .. } => {
                f.debug_struct("Composite").field("inputs", inputs).finish()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConstraintSpec {
    pub name: String,
    pub kind: ConstraintKind,
}

impl ConstraintSpec {
    pub fn white_box<F>(name: impl Into<String>, g: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            kind: ConstraintKind::WhiteBox(Arc::new(g)),
        }
    }

    /// Approximate equality `expr(x) ~ target`, encoded as
    /// `|expr(x) - target| - epsilon <= 0`.
    pub fn band<F>(name: impl Into<String>, expr: F, target: f64, epsilon: f64) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::white_box(name, move |x| (expr(x) - target).abs() - epsilon)
    }

    pub fn black_box(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ConstraintKind::BlackBox,
        }
    }

    pub fn composite<F>(name: impl Into<String>, inputs: &[&str], g: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            kind: ConstraintKind::Composite {
                inputs: inputs.iter().map(|s| s.to_string()).collect(),
                expression: Arc::new(g),
            },
        }
    }
}

/// Output of one expensive evaluation: objective values in their declared
/// sense and the blackbox constraint outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub y: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvaluationError {
    #[error("evaluator did not answer within {seconds} s")]
    Timeout { seconds: f64 },
    #[error("protocol error: {reason} (payload: {payload:?})")]
    Protocol { reason: String, payload: String },
    #[error("evaluator i/o failure: {0}")]
    Io(String),
    #[error("input lies outside the problem box")]
    OutOfBounds,
    #[error("{0}")]
    Failed(String),
}

/// Expensive function: one call per evaluated input.
pub trait Evaluator {
    fn evaluate(&mut self, x: &[f64]) -> Result<Observation, EvaluationError>;
}

impl<F> Evaluator for F
where
    F: FnMut(&[f64]) -> Result<Observation, EvaluationError>,
{
    fn evaluate(&mut self, x: &[f64]) -> Result<Observation, EvaluationError> {
        self(x)
    }
}

/// Named quantity a composite constraint may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Quantity {
    Objective(usize),
    BlackBox(usize),
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub bounds: Bounds,
    pub objectives: Vec<ObjectiveSpec>,
    pub constraints: Vec<ConstraintSpec>,
    pub budget: usize,
    pub n_init: usize,
}

impl ProblemSpec {
    /// Validates the problem. `n_init` defaults to `max(5, 2d)`.
    pub fn new(
        bounds: Bounds,
        objectives: Vec<ObjectiveSpec>,
        constraints: Vec<ConstraintSpec>,
        budget: usize,
        n_init: Option<usize>,
    ) -> Result<Self, EngineError> {
        let n_init = n_init.unwrap_or_else(|| default_n_init(bounds.dim()));
        let spec = Self {
            bounds,
            objectives,
            constraints,
            budget,
            n_init,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let config = |m: String| Err(EngineError::Config(m));
        if self.objectives.len() < 2 {
            return config(format!(
                "need at least 2 objectives, got {}",
                self.objectives.len()
            ));
        }
        if self.n_init < 2 {
            return config(format!("n_init must be >= 2, got {}", self.n_init));
        }
        if self.budget <= self.n_init {
            return config(format!(
                "budget {} must exceed n_init {}",
                self.budget, self.n_init
            ));
        }
        let mut names = HashSet::new();
        for name in self
            .objectives
            .iter()
            .map(|o| &o.name)
            .chain(self.constraints.iter().map(|c| &c.name))
        {
            if !names.insert(name.as_str()) {
                return config(format!("duplicate name `{name}`"));
            }
        }
        for c in &self.constraints {
            if let ConstraintKind::Composite { inputs, .. } = &c.kind {
                for input in inputs {
                    if self.resolve(input).is_none() {
                        return config(format!(
                            "constraint `{}` references unknown model `{input}`",
                            c.name
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn objective_count(&self) -> usize {
        self.objectives.len()
    }

    pub fn blackbox_count(&self) -> usize {
        self.blackbox_positions().len()
    }

    /// Positions in `constraints` of the blackbox constraints.
    pub fn blackbox_positions(&self) -> Vec<usize> {
        self.constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c.kind, ConstraintKind::BlackBox))
            .map(|(i, _)| i)
            .collect()
    }

    pub(crate) fn resolve(&self, name: &str) -> Option<Quantity> {
        if let Some(i) = self.objectives.iter().position(|o| o.name == name) {
            return Some(Quantity::Objective(i));
        }
        self.constraints
            .iter()
            .filter(|c| matches!(c.kind, ConstraintKind::BlackBox))
            .position(|c| c.name == name)
            .map(Quantity::BlackBox)
    }

    pub fn internal_objectives(&self, y: &[f64]) -> Vec<f64> {
        self.objectives
            .iter()
            .zip(y)
            .map(|(o, &v)| o.to_internal(v))
            .collect()
    }

    pub fn check_observation(&self, obs: &Observation) -> Result<(), String> {
        if obs.y.len() != self.objective_count() {
            return Err(format!(
                "expected {} objective values, got {}",
                self.objective_count(),
                obs.y.len()
            ));
        }
        if obs.c.len() != self.blackbox_count() {
            return Err(format!(
                "expected {} constraint values, got {}",
                self.blackbox_count(),
                obs.c.len()
            ));
        }
        if obs.y.iter().chain(&obs.c).any(|v| !v.is_finite()) {
            return Err("non-finite value in observation".into());
        }
        Ok(())
    }

    /// All constraint values `g` (declaration order) on true outputs.
    pub fn constraint_values(&self, x: &[f64], obs: &Observation) -> Vec<f64> {
        let mut blackbox = obs.c.iter();
        self.constraints
            .iter()
            .map(|c| match &c.kind {
                ConstraintKind::WhiteBox(g) => g(x),
                ConstraintKind::BlackBox => *blackbox.next().expect("observation was validated"),
                ConstraintKind::Composite { inputs, expression } => {
                    let values: Vec<f64> = inputs
                        .iter()
                        .map(|name| match self.resolve(name).expect("validated") {
                            Quantity::Objective(i) => obs.y[i],
                            Quantity::BlackBox(j) => obs.c[j],
                        })
                        .collect();
                    expression(x, &values)
                }
            })
            .collect()
    }

    /// Blackbox constraint outputs recovered from a full constraint vector.
    pub fn blackbox_outputs(&self, constraint_values: &[f64]) -> Vec<f64> {
        self.blackbox_positions()
            .into_iter()
            .map(|p| constraint_values[p])
            .collect()
    }
}

pub fn is_feasible(constraint_values: &[f64]) -> bool {
    constraint_values.iter().all(|&g| g <= 0.0)
}

pub fn default_n_init(dim: usize) -> usize {
    (2 * dim).max(5)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn objectives() -> Vec<ObjectiveSpec> {
        vec![ObjectiveSpec::minimize("f1"), ObjectiveSpec::maximize("eff")]
    }

    #[test]
    fn validation() {
        let b = Bounds::unit(2);
        assert!(ProblemSpec::new(b.clone(), objectives(), vec![], 10, Some(5)).is_ok());
        assert!(ProblemSpec::new(b.clone(), objectives()[..1].to_vec(), vec![], 10, None).is_err());
        assert!(ProblemSpec::new(b.clone(), objectives(), vec![], 5, Some(5)).is_err());
        assert!(ProblemSpec::new(b.clone(), objectives(), vec![], 10, Some(1)).is_err());
        let unknown = ConstraintSpec::composite("c", &["vo9"], |_, v| v[0]);
        let err = ProblemSpec::new(b.clone(), objectives(), vec![unknown], 10, None).unwrap_err();
        assert!(err.to_string().contains("unknown model `vo9`"), "{err}");
        let dup = ConstraintSpec::black_box("f1");
        assert!(ProblemSpec::new(b, objectives(), vec![dup], 10, None).is_err());
    }

    #[test]
    fn constraint_values_by_kind() {
        let p = ProblemSpec::new(
            Bounds::unit(2),
            objectives(),
            vec![
                ConstraintSpec::white_box("sum", |x| x[0] + x[1] - 1.0),
                ConstraintSpec::black_box("bb"),
                ConstraintSpec::composite("eff_cap", &["eff", "bb"], |_, v| v[0] - 100.0 + v[1]),
            ],
            10,
            None,
        )
        .unwrap();
        let obs = Observation {
            y: vec![1.0, 99.0],
            c: vec![-0.5],
        };
        let g = p.constraint_values(&[0.25, 0.25], &obs);
        assert_eq!(g, vec![-0.5, -0.5, -1.5]);
        assert!(is_feasible(&g));
        assert_eq!(p.blackbox_outputs(&g), vec![-0.5]);
        assert_eq!(p.internal_objectives(&obs.y), vec![1.0, -99.0]);
        assert!(p.check_observation(&Observation { y: vec![1.0], c: vec![0.0] }).is_err());
    }

    #[test]
    fn band_encoding() {
        let c = ConstraintSpec::band("c0", |x| x[0], 20.0, 2.0);
        let ConstraintKind::WhiteBox(g) = c.kind else { panic!() };
        assert_eq!(g(&[21.0]), -1.0);
        assert_eq!(g(&[17.0]), 1.0);
    }
}
