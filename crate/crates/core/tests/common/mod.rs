//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::Rng;
use usemoc::GpModel;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// `ln |det a|` from the same elimination.
pub fn dense_log_det(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut log_det = 0.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        log_det += a[col][col].abs().ln();
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    log_det
}

/// Squared-exponential covariance written out from the model's public
/// hyperparameters, on inputs scaled to the unit cube.
pub fn se_kernel(model: &GpModel, a: &[f64], b: &[f64]) -> f64 {
    let bounds = model.bounds();
    let kp = model.kernel();
    let r2: f64 = (0..a.len())
        .map(|i| {
            let w = bounds.upper()[i] - bounds.lower()[i];
            let za = (a[i] - bounds.lower()[i]) / w;
            let zb = (b[i] - bounds.lower()[i]) / w;
            ((za - zb) / kp.lengthscales[i]).powi(2)
        })
        .sum();
    kp.signal_variance * (-0.5 * r2).exp()
}

/// Regularized Gram matrix `K + (noise + jitter) I` of the training inputs.
pub fn gram(model: &GpModel) -> Vec<Vec<f64>> {
    let xs = model.train_inputs();
    let s = model.kernel().noise_variance + model.jitter();
    (0..xs.len())
        .map(|i| {
            (0..xs.len())
                .map(|j| se_kernel(model, &xs[i], &xs[j]) + if i == j { s } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Posterior mean and variance in original target units by dense solves.
pub fn dense_posterior(model: &GpModel, x: &[f64]) -> (f64, f64) {
    let xs = model.train_inputs();
    let n = xs.len();
    let ym = model.target_mean();
    let ys = model.target_std();
    let y: Vec<f64> = model.train_targets().iter().map(|t| (t - ym) / ys).collect();
    let k: Vec<f64> = xs.iter().map(|xi| se_kernel(model, x, xi)).collect();
    let g = gram(model);
    let alpha = dense_solve(g.clone(), y);
    let v = dense_solve(g, k.clone());
    let mean = ym + ys * (0..n).map(|i| k[i] * alpha[i]).sum::<f64>();
    let var = se_kernel(model, x, x) - (0..n).map(|i| k[i] * v[i]).sum::<f64>();
    (mean, ys * ys * var)
}

/// Exhaustive constrained-dominance layering: front `r` is the set of
/// remaining members not beaten by any other remaining member.
pub fn brute_force_fronts(objectives: &[Vec<f64>], violations: &[f64]) -> Vec<Vec<usize>> {
    let beats = |a: usize, b: usize| -> bool {
        let (fa, fb) = (violations[a] <= 0.0, violations[b] <= 0.0);
        if fa != fb {
            return fa;
        }
        if !fa {
            return violations[a] < violations[b];
        }
        let (ya, yb) = (&objectives[a], &objectives[b]);
        ya.iter().zip(yb).all(|(p, q)| p <= q) && ya.iter().zip(yb).any(|(p, q)| p < q)
    };
    let mut left: Vec<usize> = (0..objectives.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| j != i && beats(j, i)))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

/// Monte-Carlo hypervolume over the box spanned by the front's ideal point
/// and the reference.
pub fn monte_carlo_hypervolume<R: Rng>(front: &[Vec<f64>], reference: &[f64], samples: usize, rng: &mut R) -> f64 {
    let k = reference.len();
    let lower: Vec<f64> = (0..k)
        .map(|i| front.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min))
        .collect();
    let volume: f64 = (0..k).map(|i| reference[i] - lower[i]).product();
    let mut z = vec![0.0; k];
    let mut hits = 0usize;
    for _ in 0..samples {
        for i in 0..k {
            z[i] = rng.gen_range(lower[i]..reference[i]);
        }
        if front.iter().any(|p| p.iter().zip(&z).all(|(a, b)| a <= b)) {
            hits += 1;
        }
    }
    volume * hits as f64 / samples as f64
}

/// Writes an executable Python script into `dir`.
pub fn python_script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

/// Answers each request with `y = [sum(x), sum(x^2)]` and `c = [x0 - 0.5]`.
pub const ECHO_EVALUATOR: &str = r#"import json, sys
for line in sys.stdin:
    x = json.loads(line)["x"]
    print(json.dumps({"y": [sum(x), sum(v * v for v in x)], "c": [x[0] - 0.5]}), flush=True)
"#;

/// Answers normally `good` times, then replies with a broken line.
pub fn malformed_after(good: usize) -> String {
    format!(
        r#"import json, sys
n = 0
for line in sys.stdin:
    x = json.loads(line)["x"]
    if n >= {good}:
        print("{{not json", flush=True)
    else:
        print(json.dumps({{"y": [sum(x), sum(v * v for v in x)], "c": [x[0] - 0.5]}}), flush=True)
    n += 1
"#
    )
}

/// Answers normally `good` times, then stops responding.
pub fn silent_after(good: usize) -> String {
    format!(
        r#"import json, sys, time
n = 0
for line in sys.stdin:
    x = json.loads(line)["x"]
    if n >= {good}:
        time.sleep(60)
    print(json.dumps({{"y": [sum(x), sum(v * v for v in x)], "c": [x[0] - 0.5]}}), flush=True)
    n += 1
"#
    )
}

pub fn python() -> String {
    std::env::var("PYTHON").unwrap_or_else(|_| "python3".to_string())
}
