//! Simulated binary crossover and polynomial mutation (bounded variants).

use rand::Rng;

use crate::domain::Bounds;

use super::NsgaConfig;

const EPS: f64 = 1e-14;

/// Produces two offspring from two parent genomes. Offspring are clipped to
/// the box; the outcome depends only on the inputs and the RNG state.
pub fn variation<R: Rng + ?Sized>(
    parent_a: &[f64],
    parent_b: &[f64],
    bounds: &Bounds,
    config: &NsgaConfig,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let (mut a, mut b) = (parent_a.to_vec(), parent_b.to_vec());
    if config.crossover_probability > 0.0 && rng.gen::<f64>() < config.crossover_probability {
        sbx(&mut a, &mut b, bounds, config.sbx_eta, rng);
    }
    let pm = config.mutation_rate(bounds.dim());
    if pm > 0.0 {
        polynomial_mutation(&mut a, bounds, pm, config.mutation_eta, rng);
        polynomial_mutation(&mut b, bounds, pm, config.mutation_eta, rng);
    }
    bounds.clip(&mut a);
    bounds.clip(&mut b);
    (a, b)
}

fn spread_factor(u: f64, beta: f64, eta: f64) -> f64 {
    let alpha = 2.0 - beta.powf(-(eta + 1.0));
    if u <= 1.0 / alpha {
        (u * alpha).powf(1.0 / (eta + 1.0))
    } else {
        (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
    }
}

fn sbx<R: Rng + ?Sized>(a: &mut [f64], b: &mut [f64], bounds: &Bounds, eta: f64, rng: &mut R) {
    for i in 0..a.len() {
        if rng.gen::<f64>() > 0.5 {
            continue;
        }
        if (a[i] - b[i]).abs() <= EPS {
            continue;
        }
        let (lo, hi) = (bounds.lower()[i], bounds.upper()[i]);
        let (y1, y2) = if a[i] < b[i] { (a[i], b[i]) } else { (b[i], a[i]) };
        let u: f64 = rng.gen();
        let gap = y2 - y1;
        let bq_low = spread_factor(u, 1.0 + 2.0 * (y1 - lo) / gap, eta);
        let bq_high = spread_factor(u, 1.0 + 2.0 * (hi - y2) / gap, eta);
        let c1 = (0.5 * ((y1 + y2) - bq_low * gap)).clamp(lo, hi);
        let c2 = (0.5 * ((y1 + y2) + bq_high * gap)).clamp(lo, hi);
        if rng.gen::<f64>() <= 0.5 {
            a[i] = c2;
            b[i] = c1;
        } else {
            a[i] = c1;
            b[i] = c2;
        }
    }
}

fn polynomial_mutation<R: Rng + ?Sized>(
    x: &mut [f64],
    bounds: &Bounds,
    rate: f64,
    eta: f64,
    rng: &mut R,
) {
    let power = 1.0 / (eta + 1.0);
    for i in 0..x.len() {
        if rng.gen::<f64>() >= rate {
            continue;
        }
        let (lo, hi) = (bounds.lower()[i], bounds.upper()[i]);
        let width = hi - lo;
        let d1 = (x[i] - lo) / width;
        let d2 = (hi - x[i]) / width;
        let r: f64 = rng.gen();
        let dq = if r < 0.5 {
            let v = 2.0 * r + (1.0 - 2.0 * r) * (1.0 - d1).powf(eta + 1.0);
            v.powf(power) - 1.0
        } else {
            let v = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * (1.0 - d2).powf(eta + 1.0);
            1.0 - v.powf(power)
        };
        x[i] = (x[i] + dq * width).clamp(lo, hi);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    fn config(pc: f64, pm: f64) -> NsgaConfig {
        NsgaConfig {
            crossover_probability: pc,
            mutation_probability: Some(pm),
            ..NsgaConfig::default()
        }
    }

    #[test]
    fn no_op_variation_copies_parents() {
        let b = Bounds::unit(3);
        let mut rng = seeding::stream(1, "t", &[]);
        let (p, q) = (vec![0.1, 0.5, 0.9], vec![0.7, 0.2, 0.3]);
        let (a, c) = variation(&p, &q, &b, &config(0.0, 0.0), &mut rng);
        assert_eq!((a, c), (p, q));
    }

    #[test]
    fn offspring_stay_in_box() {
        let b = Bounds::new(vec![-1.0, 0.0], vec![1.0, 1e-3]).unwrap();
        let mut rng = seeding::stream(2, "t", &[]);
        let cfg = NsgaConfig {
            sbx_eta: 0.5,
            mutation_eta: 0.5,
            ..config(1.0, 1.0)
        };
        for _ in 0..5000 {
            let (a, c) = variation(&[-1.0, 1e-3], &[1.0, 0.0], &b, &cfg, &mut rng);
            assert!(b.contains(&a) && b.contains(&c));
        }
    }

    #[test]
    fn sbx_is_mean_preserving() {
        let b = Bounds::unit(1);
        let mut rng = seeding::stream(3, "t", &[]);
        let cfg = config(1.0, 0.0);
        let draws = 100_000;
        let mut values = Vec::with_capacity(2 * draws);
        for _ in 0..draws {
            let (a, c) = variation(&[0.2], &[0.8], &b, &cfg, &mut rng);
            values.push(a[0]);
            values.push(c[0]);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - 0.5).abs() <= 3.0 * se, "mean {mean} se {se}");
    }
}
