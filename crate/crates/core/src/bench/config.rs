//! Flat TOML experiment configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "usemoc-ei")]
    UsemocEi,
    #[serde(rename = "usemoc-lcb")]
    UsemocLcb,
    #[serde(rename = "random-search")]
    RandomSearch,
    #[serde(rename = "nsga2-direct")]
    Nsga2Direct,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::UsemocEi => "usemoc-ei",
            Algorithm::UsemocLcb => "usemoc-lcb",
            Algorithm::RandomSearch => "random-search",
            Algorithm::Nsga2Direct => "nsga2-direct",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Name of the problem whose evaluations come from `evaluator_command`.
pub const EXTERNAL_PROBLEM: &str = "external";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: String,
    pub algorithm: Algorithm,
    pub budget: usize,
    #[serde(default)]
    pub n_init: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,

    #[serde(default = "defaults::beta_delta")]
    pub beta_delta: f64,
    #[serde(default)]
    pub beta_fixed: Option<f64>,

    #[serde(default = "defaults::nsga_population")]
    pub nsga_population: usize,
    #[serde(default = "defaults::nsga_generations")]
    pub nsga_generations: usize,
    #[serde(default = "defaults::nsga_crossover_probability")]
    pub nsga_crossover_probability: f64,
    #[serde(default)]
    pub nsga_mutation_probability: Option<f64>,
    #[serde(default = "defaults::nsga_sbx_eta")]
    pub nsga_sbx_eta: f64,
    #[serde(default = "defaults::nsga_mutation_eta")]
    pub nsga_mutation_eta: f64,
    #[serde(default = "defaults::direct_population")]
    pub direct_population: usize,

    #[serde(default = "defaults::gp_restarts")]
    pub gp_restarts: usize,
    #[serde(default)]
    pub gp_max_evals: Option<usize>,

    #[serde(default = "defaults::vr_band_epsilon")]
    pub vr_band_epsilon: f64,

    #[serde(default)]
    pub evaluator_command: Option<Vec<String>>,
    #[serde(default = "defaults::evaluator_timeout_secs")]
    pub evaluator_timeout_secs: f64,
    #[serde(default)]
    pub external_lower: Option<Vec<f64>>,
    #[serde(default)]
    pub external_upper: Option<Vec<f64>>,
    /// Objective names; a `max:` prefix declares a maximized objective.
    #[serde(default)]
    pub external_objectives: Option<Vec<String>>,
    /// Number of blackbox constraints returned in `"c"`.
    #[serde(default)]
    pub external_constraints: usize,

    #[serde(default)]
    pub reference_point: Option<Vec<f64>>,
    /// Not part of the configuration hash.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

mod defaults {
    pub fn beta_delta() -> f64 {
        0.1
    }
    pub fn nsga_population() -> usize {
        100
    }
    pub fn nsga_generations() -> usize {
        100
    }
    pub fn nsga_crossover_probability() -> f64 {
        0.9
    }
    pub fn nsga_sbx_eta() -> f64 {
        15.0
    }
    pub fn nsga_mutation_eta() -> f64 {
        20.0
    }
    pub fn direct_population() -> usize {
        20
    }
    pub fn gp_restarts() -> usize {
        5
    }
    pub fn vr_band_epsilon() -> f64 {
        super::super::problems::VR_BAND_EPSILON
    }
    pub fn evaluator_timeout_secs() -> f64 {
        super::super::external::DEFAULT_TIMEOUT_SECS
    }
}

impl ExperimentConfig {
    /// A configuration with every optional key at its default.
    pub fn new(problem: impl Into<String>, algorithm: Algorithm, budget: usize, seed: u64) -> Self {
        let text = format!(
            "problem = {:?}\nalgorithm = {:?}\nbudget = {budget}\nseed = {seed}\n",
            problem.into(),
            algorithm.as_str()
        );
        Self::parse(&text).expect("minimal configuration parses")
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn seed(&self) -> Result<u64, HarnessError> {
        self.seed
            .ok_or_else(|| HarnessError::Config("a seed must be given in the config or with --seed".into()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::Config(m));
        self.seed()?;
        if !(self.beta_delta > 0.0 && self.beta_delta < 1.0) {
            return fail(format!("beta_delta must lie in (0, 1), got {}", self.beta_delta));
        }
        if let Some(b) = self.beta_fixed {
            if !(b.is_finite() && b > 0.0) {
                return fail(format!("beta_fixed must be positive, got {b}"));
            }
        }
        if !(self.evaluator_timeout_secs.is_finite() && self.evaluator_timeout_secs > 0.0) {
            return fail("evaluator_timeout_secs must be positive".into());
        }
        if self.gp_restarts == 0 {
            return fail("gp_restarts must be at least 1".into());
        }
        let external = self.problem == EXTERNAL_PROBLEM;
        if external != self.evaluator_command.is_some() {
            return fail(format!(
                "evaluator_command is required exactly when problem = {EXTERNAL_PROBLEM:?}"
            ));
        }
        if external
            && (self.external_lower.is_none()
                || self.external_upper.is_none()
                || self.external_objectives.is_none())
        {
            return fail("external problems need external_lower, external_upper and external_objectives".into());
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, excluding `output_dir`.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        let json = serde_json::to_string(&canonical).expect("configuration serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Human-readable differences `key: old -> new`, ignoring `output_dir`.
    pub fn diff(&self, other: &Self) -> Vec<String> {
        let flatten = |c: &Self| -> BTreeMap<String, serde_json::Value> {
            let mut c = c.clone();
            c.output_dir = None;
            match serde_json::to_value(c).expect("configuration serializes") {
                serde_json::Value::Object(map) => map.into_iter().collect(),
                _ => unreachable!("configuration is a struct"),
            }
        };
        let (a, b) = (flatten(self), flatten(other));
        a.keys()
            .chain(b.keys())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .filter_map(|key| {
                let (old, new) = (a.get(key), b.get(key));
                (old != new).then(|| format!("{key}: {} -> {}", show(old), show(new)))
            })
            .collect()
    }
}

fn show(v: Option<&serde_json::Value>) -> String {
    match v {
        None | Some(serde_json::Value::Null) => "(unset)".into(),
        Some(v) => v.to_string(),
    }
}
