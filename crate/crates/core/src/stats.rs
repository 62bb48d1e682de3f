//! Small numerical helpers shared by the estimators: order statistics,
//! rank arithmetic, Silverman bandwidths and Gaussian kernel densities.

use crate::error::{Error, Result};

const RANK_EPS: f64 = 1e-9;

/// `floor(n * tau)`, robust to representation error in `tau`.
pub fn floor_rank(n: usize, tau: f64) -> usize {
    (n as f64 * tau + RANK_EPS).floor() as usize
}

/// `ceil(n * tau)`, robust to representation error in `tau`.
pub fn ceil_rank(n: usize, tau: f64) -> usize {
    (n as f64 * tau - RANK_EPS).ceil().max(0.0) as usize
}

pub fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tau must lie in (0,1), got {tau}")))
    }
}

/// The `k`-th smallest value (1-based).
pub fn order_statistic(values: &[f64], k: usize) -> f64 {
    assert!(k >= 1 && k <= values.len(), "rank {k} out of 1..={}", values.len());
    let mut buf = values.to_vec();
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolation sample quantile of a sorted slice (the common
/// "type 7" definition).
pub fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Empirical `(1 - alpha)` quantile of simulated draws: the
/// `ceil((1 - alpha) * m)`-th order statistic.
pub fn upper_quantile(mut draws: Vec<f64>, alpha: f64) -> f64 {
    let m = draws.len();
    let k = ceil_rank(m, 1.0 - alpha).clamp(1, m);
    let (_, kth, _) = draws.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Silverman's rule `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`. Falls back to the
/// standard deviation when the IQR vanishes; zero when the data are constant.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len();
    let sd = std_dev(values);
    let s = sorted(values);
    let iqr = interpolated_quantile(&s, 0.75) - interpolated_quantile(&s, 0.25);
    let mut spread = sd.min(iqr / 1.34);
    if spread <= 0.0 {
        spread = sd;
    }
    0.9 * spread * (n as f64).powf(-0.2)
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Gaussian kernel density estimate at `at` with bandwidth `h`.
pub fn gaussian_kde(values: &[f64], h: f64, at: f64) -> f64 {
    if h <= 0.0 || values.is_empty() {
        return 0.0;
    }
    values.iter().map(|&v| normal_pdf((at - v) / h)).sum::<f64>() / (values.len() as f64 * h)
}

/// Kernel density with Silverman bandwidth, erroring when the estimate falls
/// below `1e-12` (the asymptotic variance is then undefined).
pub fn density_at(values: &[f64], bandwidth: Option<f64>, at: f64, label: &str) -> Result<f64> {
    let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(values));
    let f = gaussian_kde(values, h, at);
    if !(f >= 1e-12) {
        return Err(Error::DegenerateDensity {
            at: format!("{label} = {at}"),
            value: f,
        });
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks() {
        assert_eq!(floor_rank(4, 0.5), 2);
        assert_eq!(floor_rank(100, 0.29), 29);
        assert_eq!(ceil_rank(3, 0.5), 2);
        assert_eq!(ceil_rank(100, 0.29), 29);
        assert_eq!(ceil_rank(10, 0.7), 7);
        assert_eq!(floor_rank(10, 0.7), 7);
    }

    #[test]
    fn order_stats() {
        let v = [3.0, 1.0, 2.0, 2.0];
        assert_eq!(order_statistic(&v, 1), 1.0);
        assert_eq!(order_statistic(&v, 3), 2.0);
        assert_eq!(order_statistic(&v, 4), 3.0);
    }

    #[test]
    fn upper_quantile_convention() {
        let draws: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(upper_quantile(draws, 0.05), 95.0);
    }

    #[test]
    fn silverman_matches_hand_value() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        // sd = 1.5811, IQR = 2 -> 1.4925; 0.9 * 1.4925 * 5^-0.2
        let expected = 0.9 * (2.0f64 / 1.34) * 5f64.powf(-0.2);
        assert!((silverman_bandwidth(&v) - expected).abs() < 1e-12);
        assert_eq!(silverman_bandwidth(&[2.0, 2.0, 2.0]), 0.0);
    }

    #[test]
    fn kde_integrates_to_one() {
        let v = [0.0, 1.0, 1.5];
        let h = 0.4;
        let step = 1e-3;
        let total: f64 = (-5000..7000)
            .map(|i| gaussian_kde(&v, h, i as f64 * step) * step)
            .sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_density_errors() {
        assert!(matches!(
            density_at(&[1.0, 1.0], None, 1.0, "q"),
            Err(Error::DegenerateDensity { .. })
        ));
    }
}
