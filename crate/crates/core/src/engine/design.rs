//! Space-filling initial designs.

use rand::distributions::Open01;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::domain::Bounds;

/// Latin hypercube: in every dimension the `n` points occupy `n` distinct
/// equal-width strata, each placed uniformly (strictly) inside its stratum.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, bounds: &Bounds, rng: &mut R) -> Vec<Vec<f64>> {
    let d = bounds.dim();
    let mut points = vec![vec![0.0; d]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..d {
        strata.shuffle(rng);
        for (point, &s) in points.iter_mut().zip(&strata) {
            let u: f64 = rng.sample(Open01);
            point[j] = bounds.lower()[j] + (s as f64 + u) / n as f64 * bounds.width(j);
        }
    }
    points
}

pub fn uniform<R: Rng + ?Sized>(bounds: &Bounds, rng: &mut R) -> Vec<f64> {
    (0..bounds.dim())
        .map(|j| rng.gen_range(bounds.lower()[j]..=bounds.upper()[j]))
        .collect()
}
