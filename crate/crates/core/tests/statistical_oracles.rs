//! Monte Carlo and closed-form oracles for the estimators' distributional
//! claims.

use intervalq::conditional::fit_conditional;
use intervalq::data::Covariates;
use intervalq::experiments::{generate, DgpKind, DgpSpec};
use intervalq::functionals::{sup_deviation, Functional};
use intervalq::quantile_sets::{quantile_set_jittered, simulate_critical_value, test_quantile_set_jittered, TestConfig};
use intervalq::stats::mean;
use intervalq::{Cov2, IntervalDataset, IntervalObs, MetricKind, RngState};
use rand::Rng;
use rayon::prelude::*;

/// `P(0.5 v + 1.5 w <= s)` for independent uniforms, integrating over `v`
/// with the composite midpoint rule.
fn lower_endpoint_cdf(s: f64) -> f64 {
    let m = 4_000;
    (0..m)
        .map(|k| {
            let v = (k as f64 + 0.5) / m as f64;
            ((s - 0.5 * v) / 1.5).clamp(0.0, 1.0)
        })
        .sum::<f64>()
        / m as f64
}

#[test]
fn capacity_functional_matches_convolution() {
    let ds = generate(DgpSpec { kind: DgpKind::Continuous, n: 10_000 }, RngState::new(31, 0)).unwrap();
    let d = sup_deviation(&ds, lower_endpoint_cdf, Functional::Capacity);
    assert!(d <= 0.02, "sup deviation {d}");
}

#[test]
fn sup_deviation_decays_with_n() {
    let medians: Vec<f64> = [250, 1_000, 4_000, 16_000]
        .iter()
        .map(|&n| {
            let mut d: Vec<f64> = (0..100u64)
                .into_par_iter()
                .map(|r| {
                    let ds = generate(DgpSpec { kind: DgpKind::Continuous, n }, RngState::new(32, n as u64).derive(r))
                        .unwrap();
                    sup_deviation(&ds, lower_endpoint_cdf, Functional::Capacity)
                })
                .collect();
            d.sort_by(f64::total_cmp);
            0.5 * (d[49] + d[50])
        })
        .collect();
    assert!(medians.windows(2).all(|w| w[1] <= w[0]), "{medians:?}");
}

#[test]
fn identity_hausdorff_critical_value() {
    // Phi(c) - Phi(-c) = sqrt(0.95) gives c = 2.2365
    let c = simulate_critical_value(&Cov2::identity(), MetricKind::Hausdorff, 0.05, 100_000, RngState::new(33, 0))
        .unwrap();
    assert!((c - 2.2365).abs() <= 0.03, "{c}");
}

/// `a` in {0, 1, 2} with masses (0.3, 0.4, 0.3) and `b = a + 1 + Bernoulli(1/2)`.
fn small_support(n: usize, rng: RngState) -> IntervalDataset {
    let mut r = rng.rng();
    let pairs: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let u: f64 = r.random();
            let a = if u < 0.3 { 0.0 } else if u < 0.7 { 1.0 } else { 2.0 };
            (a, a + 1.0 + f64::from(u8::from(r.random_bool(0.5))))
        })
        .collect();
    IntervalDataset::from_pairs(&pairs).unwrap()
}

#[test]
fn jittered_covariance_matches_monte_carlo() {
    // tau = 0.4: q_a = 1 with q~_a = 1.25, q_b = 2 with q~_b = 2 + 0.25/0.35.
    // The delta method gives variances c (1 - c) / P: 0.469 and 0.583.
    let (n, tau, reps) = (1_000, 0.4, 3_000u64);
    let fits: Vec<(f64, f64, Cov2)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let rng = RngState::new(34, 0).derive(r);
            let ds = small_support(n, rng.derive(0));
            let fit = quantile_set_jittered(&ds, tau, rng.derive(1)).unwrap();
            (fit.estimate.lower, fit.estimate.upper, fit.sigma)
        })
        .collect();
    let root_n = (n as f64).sqrt();
    let zl: Vec<f64> = fits.iter().map(|f| root_n * (f.0 - 1.0)).collect();
    let zu: Vec<f64> = fits.iter().map(|f| root_n * (f.1 - 2.0)).collect();
    let (ml, mu) = (mean(&zl), mean(&zu));
    let var = |z: &[f64], m: f64| z.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (z.len() - 1) as f64;
    let cov = zl.iter().zip(&zu).map(|(a, b)| (a - ml) * (b - mu)).sum::<f64>() / (zl.len() - 1) as f64;
    let plug = |f: fn(&Cov2) -> f64| fits.iter().map(|x| f(&x.2)).sum::<f64>() / fits.len() as f64;
    let (pl, pc, pu) = (plug(Cov2::var_lower), plug(Cov2::cov), plug(Cov2::var_upper));
    let (vl, vu) = (var(&zl, ml), var(&zu, mu));
    assert!((vl - 0.1875 / 0.4).abs() <= 0.06 && (vu - (0.25 / 0.35) * (0.1 / 0.35) / 0.35).abs() <= 0.07);
    assert!((pl / vl - 1.0).abs() <= 0.12, "lower variance {pl} vs simulated {vl}");
    assert!((pu / vu - 1.0).abs() <= 0.12, "upper variance {pu} vs simulated {vu}");
    assert!((pc - cov).abs() <= 0.1 * (vl * vu).sqrt(), "covariance {pc} vs simulated {cov}");
    assert!(ml.abs() < 0.15 && mu.abs() < 0.15, "bias {ml} {mu}");
}

#[test]
fn jittered_test_has_level_on_discrete_design() {
    // The discrete design shifted by one half onto the integers: [t, t + 1].
    let freq = (0..1_000u64)
        .into_par_iter()
        .filter(|&r| {
            let rng = RngState::new(35, 0).derive(r);
            let ds = generate(DgpSpec { kind: DgpKind::Discrete, n: 1_000 }, rng.derive(0)).unwrap();
            let shifted: Vec<(f64, f64)> = ds.intervals().iter().map(|o| (o.lower() + 0.5, o.upper() + 0.5)).collect();
            let ds = IntervalDataset::from_pairs(&shifted).unwrap();
            let cfg = TestConfig { draws: 5_000, ..TestConfig::default() };
            let (_, out) = test_quantile_set_jittered(&ds, 0.5, &(0.0, 1.0), &cfg, rng.derive(1)).unwrap();
            out.reject
        })
        .count() as f64
        / 1_000.0;
    assert!((0.02..=0.09).contains(&freq), "rejection frequency {freq}");
}

#[test]
fn bernoulli_jitter_population_check() {
    // a in {0, 1} with P(a = 0) = 0.6: F_ã(t) = 0.6 t on (0, 1), so q_ã(0.5) = 5/6.
    let mut r = RngState::new(36, 0).rng();
    let draws: Vec<f64> = (0..1_000_000)
        .map(|_| f64::from(u8::from(r.random::<f64>() >= 0.6)) + r.random::<f64>())
        .collect();
    let below = draws.iter().filter(|&&v| v <= 5.0 / 6.0).count() as f64 / draws.len() as f64;
    assert!((below - 0.5).abs() < 0.002, "{below}");
    // de-jittering the population quantile returns q_a = 0
    let dejittered: f64 = 5.0 / 6.0 - (0.5 - 0.0) / 0.6;
    assert!(dejittered.abs() < 1e-12);
}

#[test]
fn conditional_cross_covariance_vanishes_for_independent_endpoints() {
    let n = 200_000;
    let mut r = RngState::new(37, 0).rng();
    let mut obs = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = r.random();
        obs.push(IntervalObs::new(a, 1.0 + r.random::<f64>()).unwrap());
        x.push(r.random_range(-1.0..1.0));
    }
    let ds = IntervalDataset::with_covariates(obs, Covariates::from_row_major(n, 1, x).unwrap(), false).unwrap();
    let fit = fit_conditional(&ds, 0.5, &[0.0], 1.0).unwrap();
    assert!(fit.local_n >= 2_000, "window {}", fit.local_n);
    let scale = fit.sigma.var_lower().max(fit.sigma.var_upper());
    assert!(fit.sigma.cov().abs() <= 0.05 * scale, "{:?}", fit.sigma);
}
