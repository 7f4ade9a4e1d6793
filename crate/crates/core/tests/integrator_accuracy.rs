use std::f64::consts::TAU;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use qspin::integrator::{integrate, Dopri5, IntegratorConfig};

fn decay(_t: f64, y: &[f64], dy: &mut [f64]) {
    dy[0] = -y[0];
}

fn oscillator(_t: f64, y: &[f64], dy: &mut [f64]) {
    dy[0] = y[1];
    dy[1] = -y[0];
}

fn never(_: f64, _: &[f64]) -> bool {
    false
}

fn decay_error(tol: f64) -> f64 {
    let cfg = IntegratorConfig::with_tolerance(tol);
    let (y, _) = integrate(decay, 0.0, &[1.0], 1.0, &cfg, |_, _| {}, never).unwrap();
    (y[0] - (-1.0f64).exp()).abs()
}

#[test]
fn exponential_decay_within_tolerance() {
    for tol in [1e-6, 1e-9] {
        let err = decay_error(tol);
        assert!(err <= 100.0 * tol, "tol {tol:e}: error {err:e}");
    }
    let cfg = IntegratorConfig::default();
    let (y, _) = integrate(decay, 0.0, &[1.0], 1.0, &cfg, |_, _| {}, never).unwrap();
    assert_abs_diff_eq!(y[0], 0.367879441, epsilon = 1e-9);
}

#[test]
fn oscillator_returns_after_one_period() {
    for tol in [1e-6, 1e-9] {
        let cfg = IntegratorConfig::with_tolerance(tol);
        let (y, stats) =
            integrate(oscillator, 0.0, &[1.0, 0.0], TAU, &cfg, |_, _| {}, never).unwrap();
        let err = (y[0] - 1.0).abs().max(y[1].abs());
        assert!(err <= 100.0 * tol, "tol {tol:e}: error {err:e}");
        assert_eq!(stats.final_time, TAU);
    }
}

#[test]
fn error_shrinks_with_tolerance() {
    let tols: Vec<f64> = (4..=10).map(|e| 10f64.powi(-e)).collect();
    let errs: Vec<f64> = tols.iter().map(|&t| decay_error(t)).collect();
    for (t, e) in tols.iter().zip(&errs) {
        assert!(*e <= 100.0 * t, "tol {t:e}: error {e:e}");
    }
    for w in errs.windows(2) {
        assert!(w[1] <= w[0], "{errs:?}");
    }
    // halving steps
    let mut prev = f64::INFINITY;
    let mut tol = 1e-4;
    while tol >= 1e-10 {
        let e = decay_error(tol);
        assert!(e <= prev, "tol {tol:e}: {e:e} > {prev:e}");
        prev = e;
        tol *= 0.5;
    }
}

#[test]
fn bitwise_deterministic() {
    let cfg = IntegratorConfig::default();
    let a = integrate(oscillator, 0.0, &[0.3, -0.2], 17.0, &cfg, |_, _| {}, never).unwrap();
    let b = integrate(oscillator, 0.0, &[0.3, -0.2], 17.0, &cfg, |_, _| {}, never).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

#[test]
fn windowed_integration_keeps_counters() {
    let cfg = IntegratorConfig::with_tolerance(1e-10);
    let mut solver = Dopri5::new(cfg, 2);
    let mut y = vec![1.0, 0.0];
    let mut last_accepted = 0;
    for k in 0..20 {
        let (t0, t1) = (k as f64 * 0.1 * TAU, (k + 1) as f64 * 0.1 * TAU);
        let stats = solver
            .integrate(oscillator, t0, &mut y, t1, |_, _| {}, never)
            .unwrap();
        assert!(stats.accepted_steps >= last_accepted);
        assert_eq!(stats.final_time, t1);
        last_accepted = stats.accepted_steps;
    }
    assert!((y[0] - 1.0).abs() < 1e-7 && y[1].abs() < 1e-7, "{y:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linear_decay_matches_closed_form(rate in 0.1f64..3.0, y0 in -5.0f64..5.0, t_end in 0.1f64..4.0) {
        let cfg = IntegratorConfig::with_tolerance(1e-10);
        let rhs = |_: f64, y: &[f64], dy: &mut [f64]| dy[0] = -rate * y[0];
        let (y, stats) = integrate(rhs, 0.0, &[y0], t_end, &cfg, |_, _| {}, never).unwrap();
        prop_assert!((y[0] - y0 * (-rate * t_end).exp()).abs() <= 100.0 * 1e-10 * y0.abs().max(1.0));
        prop_assert_eq!(stats.final_time, t_end);
    }

    #[test]
    fn observer_times_strictly_increase(t_end in 0.5f64..20.0) {
        let cfg = IntegratorConfig::default();
        let mut times = vec![0.0];
        integrate(oscillator, 0.0, &[1.0, 0.0], t_end, &cfg, |t, _| times.push(t), never).unwrap();
        prop_assert!(times.windows(2).all(|w| w[1] > w[0]));
        prop_assert_eq!(*times.last().unwrap(), t_end);
    }
}
