//! Quantile sets conditional on a covariate point `x*`.
//!
//! With the indicator kernel `K(u) = 1[|u| < 1] / 2` in product form, the
//! locally weighted check-loss minimizer is the `ceil(N tau)`-th order
//! statistic among the `N` observations whose covariates lie in the box
//! `|x_k - x*_k| < h_k`. Conditioning uses the non-constant covariate
//! columns; a constant column, if present, is ignored.

use serde::{Deserialize, Serialize};

use crate::data::{IntervalDataset, RngState};
use crate::error::{Error, Result};
use crate::quantile_sets::{
    simulate_critical_value, sigma_at, Bounds, Cov2, QuantileSetEstimate, TestConfig, TestOutcome,
    Variant,
};
use crate::stats::{ceil_rank, check_tau, normal_pdf, order_statistic, silverman_bandwidth};

/// Local fit at one covariate point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFit {
    pub x_star: Vec<f64>,
    pub tau: f64,
    pub bandwidths: Vec<f64>,
    pub local_n: usize,
    pub estimate: QuantileSetEstimate,
    pub sigma: Cov2,
}

/// Columns used for conditioning and their values, row-major.
struct Conditioning {
    cols: Vec<usize>,
}

impl Conditioning {
    fn new(ds: &IntervalDataset, x_star: &[f64]) -> Result<Self> {
        let cov = ds.covariates().ok_or(Error::NoCovariates)?;
        let cols = cov.nonconstant_columns();
        if cols.is_empty() {
            return Err(Error::NoCovariates);
        }
        if cols.len() != x_star.len() {
            return Err(Error::InvalidArgument(format!(
                "x* has {} coordinates, data have {} non-constant covariates",
                x_star.len(),
                cols.len()
            )));
        }
        if x_star.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("x* must be finite".into()));
        }
        Ok(Self { cols })
    }

    fn value(&self, ds: &IntervalDataset, i: usize, k: usize) -> f64 {
        ds.covariates().expect("checked").get(i, self.cols[k])
    }
}

/// Product Gaussian kernel density of the conditioning covariates at `x*`,
/// Silverman bandwidth per coordinate.
pub fn covariate_density(ds: &IntervalDataset, x_star: &[f64]) -> Result<f64> {
    let c = Conditioning::new(ds, x_star)?;
    let cov = ds.covariates().expect("checked");
    let h: Vec<f64> = c.cols.iter().map(|&k| silverman_bandwidth(&cov.column(k))).collect();
    let norm: f64 = h.iter().product();
    let total: f64 = (0..ds.len())
        .map(|i| {
            (0..c.cols.len())
                .map(|k| normal_pdf((c.value(ds, i, k) - x_star[k]) / h[k]))
                .product::<f64>()
        })
        .sum();
    Ok(total / (ds.len() as f64 * norm))
}

/// `h_k = n^(-1/(2 gamma + p)) / f_x(x*)` for every conditioning coordinate.
pub fn bandwidth_rule(ds: &IntervalDataset, tau: f64, x_star: &[f64], gamma: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let f = covariate_density(ds, x_star)?;
    if !(f >= 1e-12) {
        return Err(Error::OutsideSupport(f));
    }
    let p = x_star.len() as f64;
    let h = (ds.len() as f64).powf(-1.0 / (2.0 * gamma + p)) / f;
    Ok(vec![h; x_star.len()])
}

/// Smallest admissible window count at rank `tau`.
pub fn min_window(tau: f64) -> usize {
    5usize.max((1.0 / tau.min(1.0 - tau) - 1e-9).ceil() as usize)
}

/// Row indices inside the open bandwidth box around `x*`.
pub fn window(ds: &IntervalDataset, x_star: &[f64], bandwidths: &[f64]) -> Result<Vec<usize>> {
    let c = Conditioning::new(ds, x_star)?;
    if bandwidths.len() != x_star.len() || bandwidths.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::InvalidArgument("one positive bandwidth per coordinate required".into()));
    }
    Ok((0..ds.len())
        .filter(|&i| (0..c.cols.len()).all(|k| (c.value(ds, i, k) - x_star[k]).abs() < bandwidths[k]))
        .collect())
}

pub fn local_quantile_set(
    ds: &IntervalDataset,
    tau: f64,
    x_star: &[f64],
    bandwidths: &[f64],
) -> Result<LocalFit> {
    check_tau(tau)?;
    let rows = window(ds, x_star, bandwidths)?;
    let needed = min_window(tau);
    if rows.len() < needed {
        return Err(Error::SparseWindow {
            found: rows.len(),
            needed,
        });
    }
    let local = ds.select(&rows)?;
    local.require_finite("local_quantile_set")?;
    let k = ceil_rank(local.len(), tau).max(1);
    let estimate = QuantileSetEstimate {
        tau,
        lower: order_statistic(&local.lowers(), k),
        upper: order_statistic(&local.uppers(), k),
        variant: Variant::DiscreteCeil,
    };
    let sigma = sigma_at(&local, &estimate, None)?;
    Ok(LocalFit {
        x_star: x_star.to_vec(),
        tau,
        bandwidths: bandwidths.to_vec(),
        local_n: rows.len(),
        estimate,
        sigma,
    })
}

/// Bandwidth rule followed by the local fit.
pub fn fit_conditional(ds: &IntervalDataset, tau: f64, x_star: &[f64], gamma: f64) -> Result<LocalFit> {
    let h = bandwidth_rule(ds, tau, x_star, gamma)?;
    local_quantile_set(ds, tau, x_star, &h)
}

/// Test of `H0: Theta(tau | x*) = hypothesized`, scaled by the window count.
pub fn test_conditional_quantile_set<B: Bounds>(
    ds: &IntervalDataset,
    tau: f64,
    x_star: &[f64],
    gamma: f64,
    hypothesized: &B,
    cfg: &TestConfig,
    rng: RngState,
) -> Result<(LocalFit, TestOutcome)> {
    let fit = fit_conditional(ds, tau, x_star, gamma)?;
    let crit = simulate_critical_value(&fit.sigma, cfg.metric, cfg.alpha, cfg.draws, rng)?;
    let d = cfg.metric.distance(&fit.estimate, hypothesized)?;
    let outcome = TestOutcome::new(d, fit.local_n as f64, crit, cfg.alpha, cfg.metric);
    Ok((fit, outcome))
}

/// `sum_i w_i rho_tau(y_i - q)`.
pub fn weighted_check_loss(values: &[f64], weights: &[f64], tau: f64, q: f64) -> f64 {
    values
        .iter()
        .zip(weights)
        .map(|(&y, &w)| {
            let u = y - q;
            w * u * (tau - if u < 0.0 { 1.0 } else { 0.0 })
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Covariates, IntervalObs};

    fn with_x(pairs: &[(f64, f64)], xs: &[f64]) -> IntervalDataset {
        let obs = pairs.iter().map(|&(a, b)| IntervalObs::new(a, b).unwrap()).collect();
        let cov = Covariates::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap();
        IntervalDataset::with_covariates(obs, cov, false).unwrap()
    }

    #[test]
    fn window_counts_strict_box() {
        let d = with_x(&[(0.0, 1.0); 4], &[0.0, 0.5, 1.0, 2.0]);
        assert_eq!(window(&d, &[0.0], &[1.0]).unwrap(), vec![0, 1]);
    }

    #[test]
    fn three_point_window() {
        let mut pairs = vec![(1.0, 2.0), (2.0, 3.0), (3.0, 4.0)];
        let mut xs = vec![0.0, 0.1, -0.1];
        // Far-away observations outside the window.
        pairs.extend([(100.0, 200.0); 3]);
        xs.extend([10.0, 11.0, 12.0]);
        let d = with_x(&pairs, &xs);
        // Window of three is below the sparse threshold, so check the order
        // statistic through the window itself.
        let rows = window(&d, &[0.0], &[1.0]).unwrap();
        let local = d.select(&rows).unwrap();
        let k = ceil_rank(local.len(), 0.5);
        assert_eq!(k, 2);
        assert_eq!(order_statistic(&local.lowers(), k), 2.0);
        assert_eq!(order_statistic(&local.uppers(), k), 3.0);
        assert!(matches!(
            local_quantile_set(&d, 0.5, &[0.0], &[1.0]),
            Err(Error::SparseWindow { found: 3, needed: 5 })
        ));
    }

    #[test]
    fn min_window_values() {
        assert_eq!(min_window(0.5), 5);
        assert_eq!(min_window(0.1), 10);
        assert_eq!(min_window(0.95), 20);
    }

    #[test]
    fn bandwidth_exponent_depends_on_gamma() {
        let xs: Vec<f64> = (0..200).map(|i| (i as f64 / 199.0) * 2.0 - 1.0).collect();
        let d = with_x(&vec![(0.0, 1.0); 200], &xs);
        let h1 = bandwidth_rule(&d, 0.5, &[0.0], 1.0).unwrap()[0];
        let h2 = bandwidth_rule(&d, 0.5, &[0.0], 2.0).unwrap()[0];
        let ratio = h2 / h1;
        let expected = 200f64.powf(-0.2) / 200f64.powf(-1.0 / 3.0);
        assert!((ratio - expected).abs() < 1e-12);
    }

    #[test]
    fn outside_support() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let d = with_x(&vec![(0.0, 1.0); 50], &xs);
        assert!(matches!(
            bandwidth_rule(&d, 0.5, &[1e6], 1.0),
            Err(Error::OutsideSupport(_))
        ));
    }

    #[test]
    fn check_loss_minimum_at_order_statistic() {
        let ys = [3.0, 1.0, 4.0, 1.5, 9.0, 2.6];
        let w = [1.0; 6];
        let tau = 0.4;
        let k = ceil_rank(ys.len(), tau);
        let q = order_statistic(&ys, k);
        for &y in &ys {
            assert!(weighted_check_loss(&ys, &w, tau, q) <= weighted_check_loss(&ys, &w, tau, y) + 1e-12);
        }
    }
}
