//! Cross-run comparison: aligned hypervolume curves and pairwise gains.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::pareto::{gain_in_simulations, hypervolume_curve, Gain, HypervolumeCurve};

use super::experiment::{prepare_spec, read_checkpoint, write_atomic, HISTORY_FILE};
use super::history::read_history;
use super::HarnessError;

pub const GAINS_FILE: &str = "gains.csv";
pub const CURVES_FILE: &str = "curves.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct RunCurve {
    pub label: String,
    pub dir: PathBuf,
    pub problem: String,
    pub algorithm: String,
    pub seed: u64,
    pub curve: HypervolumeCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainEntry {
    pub target: String,
    pub baseline: String,
    pub gain: Gain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub runs: Vec<RunCurve>,
    /// Every ordered pair of distinct runs.
    pub gains: Vec<GainEntry>,
}

/// Hypervolume curve of the run stored in `dir`, rebuilt from its history.
pub fn load_run(dir: &Path) -> Result<RunCurve, HarnessError> {
    let checkpoint = read_checkpoint(dir)?;
    let log = read_history(&dir.join(HISTORY_FILE))?;
    let reference = log.header.reference_point.clone().ok_or_else(|| {
        HarnessError::Incompatible(vec![format!(
            "{}: no hypervolume reference point",
            dir.display()
        )])
    })?;
    let problem = prepare_spec(&checkpoint.config)?;
    let internal: Vec<Vec<f64>> = log
        .lines
        .iter()
        .map(|l| problem.internal_objectives(&l.record.y))
        .collect();
    let curve = hypervolume_curve(
        internal
            .iter()
            .zip(&log.lines)
            .map(|(y, l)| (y.as_slice(), l.record.feasible)),
        &reference,
    )?;
    Ok(RunCurve {
        label: dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string()),
        dir: dir.to_path_buf(),
        problem: log.header.problem,
        algorithm: log.header.algorithm,
        seed: log.header.seed,
        curve,
    })
}

pub fn compare_runs(runs: Vec<RunCurve>) -> Result<ComparisonReport, HarnessError> {
    let Some(first) = runs.first() else {
        return Err(HarnessError::Incompatible(vec!["no runs given".into()]));
    };
    let mut mismatches = Vec::new();
    for run in &runs[1..] {
        if run.problem != first.problem {
            mismatches.push(format!(
                "{}: problem {} differs from {} in {}",
                run.label, run.problem, first.problem, first.label
            ));
        }
        if run.curve.reference != first.curve.reference {
            mismatches.push(format!(
                "{}: reference point {:?} differs from {:?} in {}",
                run.label, run.curve.reference, first.curve.reference, first.label
            ));
        }
    }
    if let Some(run) = runs.iter().find(|r| r.curve.is_empty()) {
        mismatches.push(format!("{}: empty history", run.label));
    }
    if !mismatches.is_empty() {
        return Err(HarnessError::Incompatible(mismatches));
    }
    let mut gains = Vec::new();
    for target in &runs {
        for baseline in &runs {
            if std::ptr::eq(target, baseline) {
                continue;
            }
            gains.push(GainEntry {
                target: target.label.clone(),
                baseline: baseline.label.clone(),
                gain: gain_in_simulations(&target.curve, &baseline.curve)?,
            });
        }
    }
    Ok(ComparisonReport { runs, gains })
}

pub fn compare_dirs(dirs: &[PathBuf]) -> Result<ComparisonReport, HarnessError> {
    let runs = dirs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>, _>>()?;
    compare_runs(runs)
}

impl ComparisonReport {
    /// `target,baseline,gain_percent` with `not reached` written verbatim.
    pub fn gains_csv(&self) -> String {
        let mut out = String::from("target,baseline,gain_percent\n");
        for g in &self.gains {
            let value = match g.gain {
                Gain::Percent(p) => format!("{p}"),
                Gain::NotReached => "not reached".into(),
            };
            let _ = writeln!(out, "{},{},{}", g.target, g.baseline, value);
        }
        out
    }

    /// One row per evaluation index, one column per run; blank past a run's end.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("evaluation_index");
        for r in &self.runs {
            let _ = write!(out, ",{}", r.label);
        }
        out.push('\n');
        let rows = self.runs.iter().map(|r| r.curve.len()).max().unwrap_or(0);
        for i in 0..rows {
            let _ = write!(out, "{}", i + 1);
            for r in &self.runs {
                match r.curve.values.get(i) {
                    Some(v) => {
                        let _ = write!(out, ",{v}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "curves index every expensive evaluation, initial design included");
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{}: {} seed {} on {}, {} evaluations, final PHV {}",
                r.label,
                r.algorithm,
                r.seed,
                r.problem,
                r.curve.len(),
                r.curve.final_value().unwrap_or(0.0)
            );
        }
        for g in &self.gains {
            let _ = writeln!(out, "gain of {} over {}: {}", g.target, g.baseline, g.gain);
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        write_atomic(&dir.join(GAINS_FILE), self.gains_csv().as_bytes())?;
        write_atomic(&dir.join(CURVES_FILE), self.curves_csv().as_bytes())
    }
}
