mod common;

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::Rng;
use usemoc::gp::{GpError, NoiseModel};
use usemoc::seeding;
use usemoc::{Bounds, GpConfig, GpModel, KernelParams};

fn random_box<R: Rng>(rng: &mut R, d: usize) -> Bounds {
    let lower: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let upper = lower.iter().map(|l| l + rng.gen_range(0.5..10.0)).collect();
    Bounds::new(lower, upper).unwrap()
}

fn sample_in<R: Rng>(rng: &mut R, b: &Bounds) -> Vec<f64> {
    (0..b.dim()).map(|i| rng.gen_range(b.lower()[i]..=b.upper()[i])).collect()
}

#[test]
fn posterior_matches_dense_solve_for_fixed_hyperparameters() {
    let mut rng = seeding::stream(11, "gp-dense", &[]);
    for _ in 0..20 {
        let d = rng.gen_range(1..=5);
        let n = rng.gen_range(1..=40);
        let b = random_box(&mut rng, d);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| sample_in(&mut rng, &b)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.iter().map(|v| v.sin()).sum::<f64>() * 3.0 + 7.0).collect();
        let params = KernelParams::new(
            (0..d).map(|_| rng.gen_range(0.1..1.0)).collect(),
            rng.gen_range(0.5..2.0),
            rng.gen_range(1e-6..1e-2),
        )
        .unwrap();
        let model = GpModel::with_params(&xs, &ys, &b, params, true).unwrap();
        for _ in 0..5 {
            let q = sample_in(&mut rng, &b);
            let (mean, var) = common::dense_posterior(&model, &q);
            let p = model.predict(&q).unwrap();
            let prior = model.target_std().powi(2) * model.kernel().signal_variance;
            assert!((p.mean - mean).abs() <= 1e-8 * mean.abs().max(model.target_std()));
            assert!((p.std * p.std - var).abs() <= 1e-8 * var.abs().max(prior));
            assert_eq!(model.predict_mean(&q).unwrap(), p.mean);
        }
    }
}

#[test]
fn log_marginal_likelihood_matches_dense_determinant() {
    let mut rng = seeding::stream(12, "gp-lml", &[]);
    for _ in 0..10 {
        let d = rng.gen_range(1..=3);
        let n = rng.gen_range(2..=25);
        let b = Bounds::unit(d);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| sample_in(&mut rng, &b)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let params = KernelParams::new(vec![0.3; d], 1.3, 1e-3).unwrap();
        let model = GpModel::with_params(&xs, &ys, &b, params, true).unwrap();
        let g = common::gram(&model);
        let y = model.standardized_targets().to_vec();
        let alpha = common::dense_solve(g.clone(), y.clone());
        let quad: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let expected = -0.5 * quad
            - 0.5 * common::dense_log_det(g)
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(model.log_marginal_likelihood(), expected, max_relative = 1e-9);
    }
}

#[test]
fn fitted_model_interpolates_smooth_data() {
    let b = Bounds::from_pairs(&[(0.0, 5.0), (0.0, 3.0)]).unwrap();
    let mut rng = seeding::stream(3, "gp-fit-test", &[]);
    let xs: Vec<Vec<f64>> = (0..25).map(|_| sample_in(&mut rng, &b)).collect();
    let f = |x: &[f64]| 4.0 * x[0] * x[0] + 4.0 * x[1] * x[1];
    let ys: Vec<f64> = xs.iter().map(|x| f(x)).collect();
    let model = GpModel::fit(&xs, &ys, &b, &GpConfig::default()).unwrap();
    for (x, y) in xs.iter().zip(&ys) {
        let p = model.predict(x).unwrap();
        assert!((p.mean - y).abs() <= 1e-3 * (1.0 + y.abs()));
    }
    let q = [2.2, 1.4];
    let p = model.predict(&q).unwrap();
    assert!((p.mean - f(&q)).abs() < 1.0);
    let (lo, hi) = model.kernel().lengthscales.iter().fold((f64::MAX, 0.0f64), |a, l| (a.0.min(*l), a.1.max(*l)));
    assert!(lo >= 1e-3 && hi <= 1e3);
}

#[test]
fn zero_noise_model_reproduces_training_targets() {
    let b = Bounds::unit(3);
    let mut rng = seeding::stream(5, "gp-zero-noise", &[]);
    let xs: Vec<Vec<f64>> = (0..15).map(|_| sample_in(&mut rng, &b)).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x[0]).cos() + x[1] * x[2]).collect();
    let config = GpConfig {
        noise: NoiseModel::Fixed(0.0),
        ..GpConfig::default()
    };
    let model = GpModel::fit(&xs, &ys, &b, &config).unwrap();
    for (x, y) in xs.iter().zip(&ys) {
        let p = model.predict(x).unwrap();
        assert!((p.mean - y).abs() <= 1e-6, "{} vs {y}", p.mean);
        assert!(p.std <= 1e-3 * model.target_std());
    }
}

#[test]
fn fitting_is_deterministic_for_a_seed() {
    let b = Bounds::unit(2);
    let xs = vec![vec![0.1, 0.2], vec![0.8, 0.4], vec![0.5, 0.9], vec![0.3, 0.6]];
    let ys = [1.0, -0.5, 2.0, 0.25];
    let a = GpModel::fit(&xs, &ys, &b, &GpConfig::default()).unwrap();
    let c = GpModel::fit(&xs, &ys, &b, &GpConfig::default()).unwrap();
    assert_eq!(a.kernel(), c.kernel());
    assert_eq!(a.predict(&[0.4, 0.4]).unwrap(), c.predict(&[0.4, 0.4]).unwrap());
}

#[test]
fn query_errors() {
    let b = Bounds::unit(2);
    let m = GpModel::with_params(&[vec![0.5, 0.5]], &[1.0], &b, KernelParams::unit(2), true).unwrap();
    assert_eq!(
        m.predict(&[0.5]).unwrap_err(),
        GpError::QueryDimension { found: 1, expected: 2 }
    );
    assert_eq!(m.predict(&[f64::NAN, 0.0]).unwrap_err(), GpError::NonFiniteQuery);
    let err = GpModel::with_params(&[vec![0.5, 0.5]], &[1.0], &b, KernelParams::unit(3), true).unwrap_err();
    assert!(matches!(err, GpError::InvalidParams(_)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn variance_never_exceeds_prior_and_shrinks_with_data(
        pts in proptest::collection::vec(proptest::collection::vec(0.0..1.0f64, 2), 2..12),
        q in proptest::collection::vec(0.0..1.0f64, 2),
        ls in 0.1..1.0f64,
    ) {
        let b = Bounds::unit(2);
        let ys: Vec<f64> = pts.iter().map(|x| x[0] - 2.0 * x[1]).collect();
        let params = KernelParams::new(vec![ls, ls], 1.0, 1e-4).unwrap();
        let fewer = GpModel::with_params(&pts[..1], &ys[..1], &b, params.clone(), false).unwrap();
        let more = GpModel::with_params(&pts, &ys, &b, params, false).unwrap();
        let s1 = fewer.predict(&q).unwrap().std;
        let s2 = more.predict(&q).unwrap().std;
        prop_assert!(s1 <= 1.0 + 1e-12);
        prop_assert!(s2 <= s1 + 1e-9);
    }

    #[test]
    fn predictions_are_invariant_to_target_shift_and_scale(
        pts in proptest::collection::vec(proptest::collection::vec(0.0..1.0f64, 1), 2..10),
        shift in -100.0..100.0f64,
        scale in 0.1..10.0f64,
    ) {
        let b = Bounds::unit(1);
        let ys: Vec<f64> = pts.iter().map(|x| (5.0 * x[0]).sin()).collect();
        let moved: Vec<f64> = ys.iter().map(|y| shift + scale * y).collect();
        let params = KernelParams::new(vec![0.3], 1.0, 1e-3).unwrap();
        let a = GpModel::with_params(&pts, &ys, &b, params.clone(), true);
        let c = GpModel::with_params(&pts, &moved, &b, params, true);
        if let (Ok(a), Ok(c)) = (a, c) {
            let pa = a.predict(&[0.37]).unwrap();
            let pc = c.predict(&[0.37]).unwrap();
            prop_assert!((pc.mean - (shift + scale * pa.mean)).abs() <= 1e-6 * (1.0 + pc.mean.abs()));
            prop_assert!((pc.std - scale * pa.std).abs() <= 1e-6 * (1.0 + pc.std));
        }
    }
}
