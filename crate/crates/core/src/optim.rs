//! Derivative-free minimization used for kernel hyperparameter fitting.

pub(crate) struct NelderMeadOptions {
    pub initial_step: f64,
    pub max_evals: usize,
    pub f_tol: f64,
    pub x_tol: f64,
}

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
}

/// Nelder-Mead over a box. Points are projected onto `[lower, upper]`
/// before every evaluation; non-finite values are treated as `+inf`.
pub(crate) fn nelder_mead<F>(
    mut f: F,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &NelderMeadOptions,
) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    let project = |x: &mut Vec<f64>| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut first = start.to_vec();
    project(&mut first);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(&first, &mut evals);
    simplex.push((first.clone(), v0));
    for i in 0..n {
        let mut p = first.clone();
        let step = if p[i] + opts.initial_step <= upper[i] {
            opts.initial_step
        } else {
            -opts.initial_step
        };
        p[i] += step;
        project(&mut p);
        let v = eval(&p, &mut evals);
        simplex.push((p, v));
    }

    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = (worst - best).abs();
        let diameter = simplex[1..]
            .iter()
            .map(|(p, _)| {
                p.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if best.is_finite() && spread <= opts.f_tol * (1.0 + best.abs()) && diameter <= opts.x_tol {
            break;
        }

        let mut centroid = vec![0.0; n];
        for (p, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let mut reflected = along(-1.0);
        project(&mut reflected);
        let fr = eval(&reflected, &mut evals);
        if fr < simplex[0].1 {
            let mut expanded = along(-2.0);
            project(&mut expanded);
            let fe = eval(&expanded, &mut evals);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
            continue;
        }
        let (mut contracted, outside) = if fr < simplex[n].1 {
            (along(-0.5), true)
        } else {
            (along(0.5), false)
        };
        project(&mut contracted);
        let fc = eval(&contracted, &mut evals);
        let threshold = if outside { fr } else { simplex[n].1 };
        if fc < threshold {
            simplex[n] = (contracted, fc);
            continue;
        }
        // shrink toward the best vertex
        let best_point = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let mut p: Vec<f64> = best_point
                .iter()
                .zip(&vertex.0)
                .map(|(b, v)| b + 0.5 * (v - b))
                .collect();
            project(&mut p);
            let v = eval(&p, &mut evals);
            *vertex = (p, v);
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value }
}
