//! Dominance, feasible Pareto extraction, exact hypervolume and the
//! gain-in-evaluations comparison metric. Everything here assumes
//! minimization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest objective count accepted by [`hypervolume`].
pub const MAX_HYPERVOLUME_OBJECTIVES: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("exact hypervolume supports at most {MAX_HYPERVOLUME_OBJECTIVES} objectives, got {0}")]
    TooManyObjectives(usize),
    #[error("point {index} has {found} objectives but the reference point has {expected}")]
    Dimension {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("reference point must be non-empty and finite")]
    InvalidReference,
    #[error("curves use different reference points: {target:?} vs {baseline:?}")]
    ReferenceMismatch {
        target: Vec<f64>,
        baseline: Vec<f64>,
    },
    #[error("curve is empty")]
    EmptyCurve,
}

/// `a` Pareto-dominates `b`: no worse everywhere, strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Indices of feasible points not dominated by any other feasible point.
/// Among identical objective vectors only the earliest index is kept.
pub fn pareto_filter(objectives: &[Vec<f64>], feasible: &[bool]) -> Vec<usize> {
    let candidates: Vec<usize> = (0..objectives.len())
        .filter(|&i| feasible.get(i).copied().unwrap_or(false))
        .collect();
    candidates
        .iter()
        .copied()
        .filter(|&i| {
            candidates.iter().all(|&j| {
                j == i
                    || !(dominates(&objectives[j], &objectives[i])
                        || (j < i && objectives[j] == objectives[i]))
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypervolumeReport {
    pub value: f64,
    /// Points dropped because they do not strictly dominate the reference.
    pub excluded: usize,
}

/// Exact dominated volume of `front` bounded by `reference`.
pub fn hypervolume(front: &[Vec<f64>], reference: &[f64]) -> Result<f64, MetricsError> {
    hypervolume_report(front, reference).map(|r| r.value)
}

pub fn hypervolume_report(
    front: &[Vec<f64>],
    reference: &[f64],
) -> Result<HypervolumeReport, MetricsError> {
    let k = reference.len();
    if k == 0 || reference.iter().any(|r| !r.is_finite()) {
        return Err(MetricsError::InvalidReference);
    }
    if k > MAX_HYPERVOLUME_OBJECTIVES {
        return Err(MetricsError::TooManyObjectives(k));
    }
    let mut points = Vec::with_capacity(front.len());
    let mut excluded = 0;
    for (index, p) in front.iter().enumerate() {
        if p.len() != k {
            return Err(MetricsError::Dimension {
                index,
                found: p.len(),
                expected: k,
            });
        }
        if p.iter().zip(reference).all(|(v, r)| v < r) {
            points.push(p.clone());
        } else {
            excluded += 1;
        }
    }
    if excluded > 0 {
        log::warn!("{excluded} point(s) do not dominate the hypervolume reference and were ignored");
    }
    let points = nondominated(points);
    Ok(HypervolumeReport {
        value: sweep(points, reference),
        excluded,
    })
}

fn nondominated(mut points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    points.sort_by(|a, b| crate::nsga::lexicographic(a, b));
    points.dedup();
    let keep: Vec<bool> = points
        .iter()
        .map(|p| !points.iter().any(|q| dominates(q, p)))
        .collect();
    points
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect()
}

/// Dimension sweep over the last objective: slabs between consecutive
/// values of that objective times the (k-1)-dimensional volume of the
/// points already swept.
fn sweep(mut points: Vec<Vec<f64>>, reference: &[f64]) -> f64 {
    let k = reference.len();
    if points.is_empty() {
        return 0.0;
    }
    match k {
        1 => reference[0] - points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min),
        2 => {
            points.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
            let mut volume = 0.0;
            let mut ceiling = reference[1];
            for p in &points {
                if p[1] < ceiling {
                    volume += (reference[0] - p[0]) * (ceiling - p[1]);
                    ceiling = p[1];
                }
            }
            volume
        }
        _ => {
            points.sort_by(|a, b| a[k - 1].total_cmp(&b[k - 1]));
            let mut volume = 0.0;
            let mut swept: Vec<Vec<f64>> = Vec::with_capacity(points.len());
            for i in 0..points.len() {
                swept.push(points[i][..k - 1].to_vec());
                let top = points.get(i + 1).map_or(reference[k - 1], |p| p[k - 1]);
                let height = top - points[i][k - 1];
                if height > 0.0 {
                    swept = nondominated(swept);
                    volume += height * sweep(swept.clone(), &reference[..k - 1]);
                }
            }
            volume
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchivePoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Feasible non-dominated subset of an evaluation history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive {
    pub points: Vec<ArchivePoint>,
    pub reference_point: Option<Vec<f64>>,
}

/// Cumulative hypervolume after each evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypervolumeCurve {
    pub reference: Vec<f64>,
    pub values: Vec<f64>,
}

impl HypervolumeCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn final_value(&self) -> Option<f64> {
        self.values.last().copied()
    }

    /// 1-based number of evaluations after which the curve first reaches `level`.
    pub fn evaluations_to_reach(&self, level: f64) -> Option<usize> {
        self.values.iter().position(|&v| v >= level).map(|i| i + 1)
    }
}

/// Entry `i` is the hypervolume of the feasible non-dominated subset of
/// records `0..=i`.
pub fn hypervolume_curve<'a, I>(records: I, reference: &[f64]) -> Result<HypervolumeCurve, MetricsError>
where
    I: IntoIterator<Item = (&'a [f64], bool)>,
{
    hypervolume(&[], reference)?;
    let mut front: Vec<Vec<f64>> = Vec::new();
    let mut values = Vec::new();
    let mut current = 0.0;
    for (index, (y, feasible)) in records.into_iter().enumerate() {
        if y.len() != reference.len() {
            return Err(MetricsError::Dimension {
                index,
                found: y.len(),
                expected: reference.len(),
            });
        }
        if feasible && !front.iter().any(|p| dominates(p, y) || p.as_slice() == y) {
            front.retain(|p| !dominates(y, p));
            front.push(y.to_vec());
            current = hypervolume(&front, reference)?;
        }
        values.push(current);
    }
    Ok(HypervolumeCurve {
        reference: reference.to_vec(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gain {
    Percent(f64),
    NotReached,
}

impl std::fmt::Display for Gain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Gain::Percent(p) => write!(f, "{p:.1}%"),
            Gain::NotReached => f.write_str("not reached"),
        }
    }
}

/// Percentage of the baseline's evaluations saved by `target` in reaching
/// the baseline's final hypervolume. The baseline's cost is the number of
/// evaluations it needed to first attain its final value.
pub fn gain_in_simulations(
    target: &HypervolumeCurve,
    baseline: &HypervolumeCurve,
) -> Result<Gain, MetricsError> {
    if target.reference != baseline.reference {
        return Err(MetricsError::ReferenceMismatch {
            target: target.reference.clone(),
            baseline: baseline.reference.clone(),
        });
    }
    let level = baseline.final_value().ok_or(MetricsError::EmptyCurve)?;
    if target.is_empty() {
        return Err(MetricsError::EmptyCurve);
    }
    let baseline_cost = baseline
        .evaluations_to_reach(level)
        .expect("a curve reaches its own final value") as f64;
    Ok(match target.evaluations_to_reach(level) {
        Some(n) => Gain::Percent(100.0 * (baseline_cost - n as f64) / baseline_cost),
        None => Gain::NotReached,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[&[f64]]) -> Vec<Vec<f64>> {
        v.iter().map(|p| p.to_vec()).collect()
    }

    #[test]
    fn filter_examples() {
        let ys = pts(&[&[1.0, 2.0], &[2.0, 1.0], &[2.0, 2.0]]);
        assert_eq!(pareto_filter(&ys, &[false; 3]), Vec::<usize>::new());
        assert_eq!(pareto_filter(&ys, &[true; 3]), vec![0, 1]);
        assert_eq!(pareto_filter(&[], &[]), Vec::<usize>::new());
        let dup = pts(&[&[3.0, 3.0], &[1.0, 1.0], &[1.0, 1.0]]);
        assert_eq!(pareto_filter(&dup, &[true; 3]), vec![1]);
        assert_eq!(pareto_filter(&dup, &[true, false, true]), vec![2]);
    }

    #[test]
    fn hypervolume_examples() {
        assert_eq!(hypervolume(&pts(&[&[0.0, 0.0]]), &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(hypervolume(&pts(&[&[1.0, 2.0], &[2.0, 1.0]]), &[3.0, 3.0]).unwrap(), 3.0);
        assert_eq!(hypervolume(&[], &[1.0, 1.0]).unwrap(), 0.0);
        let r = hypervolume_report(&pts(&[&[0.5, 0.5], &[2.0, 0.0]]), &[1.0, 1.0]).unwrap();
        assert_eq!(r, HypervolumeReport { value: 0.25, excluded: 1 });
        assert_eq!(
            hypervolume(&[], &[1.0; 5]),
            Err(MetricsError::TooManyObjectives(5))
        );
        // two unit cubes overlapping in a half cube
        let v = hypervolume(&pts(&[&[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]), &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(v, 4.0 + 4.0 - 2.0);
    }

    #[test]
    fn curve_examples() {
        let ys = pts(&[&[2.0, 2.0], &[1.0, 1.0], &[1.5, 1.5], &[0.5, 2.5]]);
        let feas = [false, true, true, true];
        let c = hypervolume_curve(ys.iter().map(|y| y.as_slice()).zip(feas), &[3.0, 3.0]).unwrap();
        assert_eq!(c.values[0], 0.0);
        assert_eq!(c.values[1], 4.0);
        // dominated point leaves the curve unchanged
        assert_eq!(c.values[2], 4.0);
        let direct = hypervolume(&pts(&[&[1.0, 1.0], &[0.5, 2.5]]), &[3.0, 3.0]).unwrap();
        assert_eq!(c.values[3], direct);
        assert!(c.values[3] > c.values[2]);
    }

    #[test]
    fn gain_examples() {
        let r = vec![1.0, 1.0];
        let mut baseline = vec![0.0; 100];
        baseline[99] = 1.0;
        let baseline = HypervolumeCurve { reference: r.clone(), values: baseline };
        let mut target = vec![0.0; 8];
        target[7] = 1.0;
        target.extend([1.0; 10]);
        let target = HypervolumeCurve { reference: r.clone(), values: target };
        assert_eq!(gain_in_simulations(&target, &baseline).unwrap(), Gain::Percent(92.0));
        assert_eq!(gain_in_simulations(&baseline, &baseline).unwrap(), Gain::Percent(0.0));
        let never = HypervolumeCurve { reference: r, values: vec![0.5; 200] };
        assert_eq!(gain_in_simulations(&never, &baseline).unwrap(), Gain::NotReached);
        let other = HypervolumeCurve { reference: vec![2.0, 2.0], values: vec![1.0] };
        assert!(matches!(
            gain_in_simulations(&other, &baseline),
            Err(MetricsError::ReferenceMismatch { .. })
        ));
    }

    fn front_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, usize)> {
        (2usize..=4).prop_flat_map(|k| {
            (proptest::collection::vec(proptest::collection::vec(0.0..1.0f64, k), 1..12), Just(k))
        })
    }

    proptest! {
        #[test]
        fn hypervolume_is_permutation_invariant((front, k) in front_strategy(), rot in 0usize..4) {
            let reference = vec![1.1; k];
            let base = hypervolume(&front, &reference).unwrap();
            let mut reversed = front.clone();
            reversed.reverse();
            let axis = rot % k;
            let swapped: Vec<Vec<f64>> = front
                .iter()
                .map(|p| { let mut q = p.clone(); q.swap(0, axis); q })
                .collect();
            let tol = 1e-12 * (1.0 + base);
            prop_assert!((hypervolume(&reversed, &reference).unwrap() - base).abs() <= tol);
            prop_assert!((hypervolume(&swapped, &reference).unwrap() - base).abs() <= tol);
        }

        #[test]
        fn hypervolume_is_monotone((front, k) in front_strategy(), extra in proptest::collection::vec(0.0..1.0f64, 4)) {
            let reference = vec![1.1; k];
            let base = hypervolume(&front, &reference).unwrap();
            let mut more = front.clone();
            more.push(extra[..k].to_vec());
            prop_assert!(hypervolume(&more, &reference).unwrap() >= base - 1e-12);
        }

        #[test]
        fn filter_is_idempotent((front, _k) in front_strategy(), mask in proptest::collection::vec(any::<bool>(), 12)) {
            let feasible = &mask[..front.len()];
            let first = pareto_filter(&front, feasible);
            let kept: Vec<Vec<f64>> = first.iter().map(|&i| front[i].clone()).collect();
            let again = pareto_filter(&kept, &vec![true; kept.len()]);
            prop_assert_eq!(again, (0..kept.len()).collect::<Vec<_>>());
        }

        #[test]
        fn curve_is_monotone((front, k) in front_strategy(), mask in proptest::collection::vec(any::<bool>(), 12)) {
            let reference = vec![1.1; k];
            let c = hypervolume_curve(front.iter().map(|y| y.as_slice()).zip(mask.iter().copied()), &reference).unwrap();
            prop_assert!(c.values.windows(2).all(|w| w[1] >= w[0]));
        }
    }
}
