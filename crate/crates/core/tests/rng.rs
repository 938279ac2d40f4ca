mod common;

use fracqueue::estimate::ks_one_sample;
use fracqueue::rng::{sample_inverse_subordinator, sample_ml_sojourn, sample_stable, RngStream};
use fracqueue::specfun::{log_ml_moments, ml_survival};

#[test]
fn stable_laplace_transform() {
    let mut stream = RngStream::new(2024, 0);
    for &alpha in &[0.3, 0.5, 0.8] {
        let draws: Vec<f64> = (0..200_000).map(|_| sample_stable(&mut stream, alpha).unwrap().value).collect();
        for &xi in &[0.5, 1.0, 2.0] {
            let values: Vec<f64> = draws.iter().map(|t| (-xi * t).exp()).collect();
            let (mean, se) = common::mean_se(&values);
            let want = (-f64::powf(xi, alpha)).exp();
            assert!((mean - want).abs() < 4.0 * se, "alpha={alpha} xi={xi}: {mean} vs {want} (se {se})");
        }
    }
}

#[test]
fn sojourn_law_matches_survival_function() {
    let mut stream = RngStream::new(99, 1);
    let (alpha, rate) = (0.7, 2.5);
    let x: Vec<f64> = (0..20_000).map(|_| sample_ml_sojourn(&mut stream, alpha, rate).unwrap()).collect();
    let ks = ks_one_sample(&x, |t| 1.0 - ml_survival(alpha, rate, t).unwrap()).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn log_sojourn_moments() {
    let mut stream = RngStream::new(5, 0);
    let (alpha, rate) = (0.6, 3.0);
    let logs: Vec<f64> = (0..200_000).map(|_| sample_ml_sojourn(&mut stream, alpha, rate).unwrap().ln()).collect();
    let (mean, se) = common::mean_se(&logs);
    let (want_mean, want_var) = log_ml_moments(alpha, rate).unwrap();
    assert!((mean - want_mean).abs() < 4.0 * se);
    let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (logs.len() - 1) as f64;
    assert!(((var - want_var) / want_var).abs() < 0.03, "{var} vs {want_var}");
}

#[test]
fn inverse_subordinator_mean() {
    // E[E(t)] = t^alpha / Gamma(1 + alpha)
    let mut stream = RngStream::new(8, 0);
    let (alpha, t) = (0.6, 2.0);
    let x: Vec<f64> = (0..200_000).map(|_| sample_inverse_subordinator(&mut stream, alpha, t).unwrap()).collect();
    let (mean, se) = common::mean_se(&x);
    let want = f64::powf(t, alpha) / fracqueue::specfun::gamma(1.0 + alpha);
    assert!((mean - want).abs() < 4.0 * se, "{mean} vs {want}");
}

#[test]
fn same_seed_same_draws() {
    let mut a = RngStream::new(11, 7);
    let mut b = RngStream::new(11, 7);
    for _ in 0..100 {
        assert_eq!(sample_stable(&mut a, 0.4).unwrap(), sample_stable(&mut b, 0.4).unwrap());
    }
}
