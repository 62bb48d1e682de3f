//! Simulation designs and their population quantities.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal as StatrsNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Covariates, IntervalDataset, IntervalObs, RngState};
use crate::error::{Error, Result};

/// Standard deviation of the latent normal in the discrete design
/// (variance 10).
pub const DISCRETE_SD: f64 = 3.162_277_660_168_379_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DgpKind {
    /// `a = 0.5 v + 1.5 w`, `b = 2.5 v + 1.5 w`.
    Continuous,
    /// Unit bins `(t - 0.5, t + 0.5]` of `N(0, 10)` draws.
    Discrete,
    /// `a = (0.5 + x) v + 1.5 w`, `b = (2.5 + x) v + 1.5 w`, `x ~ N(0, 1)`.
    Conditional,
    /// `y = 1 + (1 + x) e` in bins `(t - 0.1, t]`, covariates `(1, x)`.
    Parametric,
}

impl DgpKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(Self::Continuous),
            "discrete" => Ok(Self::Discrete),
            "conditional" => Ok(Self::Conditional),
            "parametric" => Ok(Self::Parametric),
            other => Err(Error::InvalidArgument(format!("unknown design `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub n: usize,
}

/// The width-0.1 bin `[t - 0.1, t]` containing `y` in `(t - 0.1, t]`.
pub fn parametric_bin(y: f64) -> (f64, f64) {
    let k = (y * 10.0 - 1e-9).ceil();
    ((k - 1.0) / 10.0, k / 10.0)
}

/// The unit bin `[t - 0.5, t + 0.5]` with `y in (t - 0.5, t + 0.5]`.
pub fn discrete_bin(y: f64) -> (f64, f64) {
    let t = (y - 0.5).ceil();
    (t - 0.5, t + 0.5)
}

pub fn generate(spec: DgpSpec, rng: RngState) -> Result<IntervalDataset> {
    if spec.n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let mut r = rng.rng();
    let n = spec.n;
    let mut obs = Vec::with_capacity(n);
    match spec.kind {
        DgpKind::Continuous => {
            for _ in 0..n {
                let (v, w): (f64, f64) = (r.random(), r.random());
                obs.push(IntervalObs::new(0.5 * v + 1.5 * w, 2.5 * v + 1.5 * w)?);
            }
            IntervalDataset::new(obs)
        }
        DgpKind::Discrete => {
            let normal = Normal::new(0.0, DISCRETE_SD).expect("valid sd");
            for _ in 0..n {
                let (a, b) = discrete_bin(normal.sample(&mut r));
                obs.push(IntervalObs::new(a, b)?);
            }
            IntervalDataset::new(obs)
        }
        DgpKind::Conditional => {
            let mut xs = Vec::with_capacity(n);
            for _ in 0..n {
                let x: f64 = r.sample(StandardNormal);
                let (v, w): (f64, f64) = (r.random(), r.random());
                obs.push(IntervalObs::new((0.5 + x) * v + 1.5 * w, (2.5 + x) * v + 1.5 * w)?);
                xs.push(x);
            }
            IntervalDataset::with_covariates(obs, Covariates::from_row_major(n, 1, xs)?, false)
        }
        DgpKind::Parametric => {
            let mut xs = Vec::with_capacity(2 * n);
            for _ in 0..n {
                let (x, e): (f64, f64) = (r.random(), r.random());
                let (a, b) = parametric_bin(1.0 + (1.0 + x) * e);
                obs.push(IntervalObs::new(a, b)?);
                xs.extend([1.0, x]);
            }
            IntervalDataset::with_covariates(obs, Covariates::from_row_major(n, 2, xs)?, true)
        }
    }
}

/// `theta0 + delta * width / sqrt(n)` applied to both endpoints.
pub fn local_alternative(theta0: (f64, f64), delta: f64, n: usize) -> (f64, f64) {
    let shift = delta * (theta0.1 - theta0.0) / (n as f64).sqrt();
    (theta0.0 + shift, theta0.1 + shift)
}

/// `int clip(t, 0, 1) dt`.
fn clip_antiderivative(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t <= 1.0 {
        0.5 * t * t
    } else {
        t - 0.5
    }
}

/// CDF of `alpha V + beta W` for independent `V, W ~ U(0,1)` and `beta > 0`.
pub fn uniform_sum_cdf(alpha: f64, beta: f64, s: f64) -> f64 {
    assert!(beta > 0.0);
    if alpha.abs() < 1e-14 {
        return (s / beta).clamp(0.0, 1.0);
    }
    let v = beta / alpha * (clip_antiderivative(s / beta) - clip_antiderivative((s - alpha) / beta));
    v.clamp(0.0, 1.0)
}

/// Quantile of a continuous increasing CDF on `[lo, hi]` by bisection.
pub fn invert_cdf(cdf: impl Fn(f64) -> f64, tau: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Population quantile set of the continuous design.
pub fn continuous_quantile_set(tau: f64) -> (f64, f64) {
    conditional_quantile_set(tau, 0.0)
}

/// Population quantile set of the conditional design at `x`.
pub fn conditional_quantile_set(tau: f64, x: f64) -> (f64, f64) {
    let q = |alpha: f64| {
        let lo = alpha.min(0.0) - 1.0;
        let hi = alpha.max(0.0) + 2.0;
        invert_cdf(|s| uniform_sum_cdf(alpha, 1.5, s), tau, lo, hi)
    };
    (q(0.5 + x), q(2.5 + x))
}

/// Population quantile set of the discrete design: the bin containing the
/// latent normal quantile.
pub fn discrete_quantile_set(tau: f64) -> (f64, f64) {
    discrete_bin(DISCRETE_SD * StatrsNormal::standard().inverse_cdf(tau))
}

/// True coefficients `(1 + tau, tau)` of the parametric design.
pub fn parametric_truth(tau: f64) -> [f64; 2] {
    [1.0 + tau, tau]
}

/// Published reference values: `(tau, q_a, q_b)`.
pub const TABLE1: [(f64, f64, f64); 7] = [
    (0.2, 0.550, 1.225),
    (0.3, 0.700, 1.500),
    (0.4, 0.850, 1.750),
    (0.5, 1.000, 2.000),
    (0.6, 1.150, 2.250),
    (0.7, 1.300, 2.500),
    (0.8, 1.450, 2.775),
];

pub const TABLE3: [(f64, f64, f64); 7] = [
    (0.2, -3.5, -2.5),
    (0.3, -2.5, -1.5),
    (0.4, -1.5, -0.5),
    (0.5, -0.5, 0.5),
    (0.6, 0.5, 1.5),
    (0.7, 1.5, 2.5),
    (0.8, 2.5, 3.5),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parametric_example() {
        let y: f64 = 1.0 + (1.0 + 0.385) * 0.573;
        assert!((y - 1.794).abs() < 1e-3);
        let (a, b) = parametric_bin(y);
        assert!((a - 1.7).abs() < 1e-12 && (b - 1.8).abs() < 1e-12);
        // Right-closed bins.
        let (a, b) = parametric_bin(1.8);
        assert!((a - 1.7).abs() < 1e-12 && (b - 1.8).abs() < 1e-12);
    }

    #[test]
    fn discrete_example() {
        assert_eq!(discrete_bin(2.485), (1.5, 2.5));
        assert_eq!(discrete_bin(0.5), (-0.5, 0.5));
    }

    #[test]
    fn local_alternatives() {
        assert_eq!(local_alternative((1.0, 2.0), 0.0, 400), (1.0, 2.0));
        let (a, b) = local_alternative((1.0, 2.0), 2.0, 400);
        assert!((a - 1.1).abs() < 1e-12 && (b - 2.1).abs() < 1e-12);
        let (a, b) = local_alternative((-0.5, 0.5), 8.0, 100);
        assert!((a - 0.3).abs() < 1e-12 && (b - 1.3).abs() < 1e-12);
    }

    #[test]
    fn table1_closed_form() {
        for (tau, qa, qb) in TABLE1 {
            let (a, b) = continuous_quantile_set(tau);
            // The table rounds sqrt(1.5) = 1.2247 to 1.225.
            assert!((a - qa).abs() < 1e-3, "{tau}: {a}");
            assert!((b - qb).abs() < 1e-3, "{tau}: {b}");
        }
    }

    #[test]
    fn table3_matches_variance_ten() {
        for (tau, qa, qb) in TABLE3 {
            assert_eq!(discrete_quantile_set(tau), (qa, qb), "tau {tau}");
        }
    }

    #[test]
    fn uniform_sum_negative_coefficient() {
        // -0.5 V + 1.5 W at s = 0: P(1.5 W <= 0.5 V) = E[min(V/3, 1)] = 1/6.
        assert!((uniform_sum_cdf(-0.5, 1.5, 0.0) - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn designs_satisfy_structure() {
        let c = generate(DgpSpec { kind: DgpKind::Continuous, n: 500 }, RngState::new(1, 0)).unwrap();
        assert!(c.intervals().iter().all(|o| o.width() >= 0.0));
        let d = generate(DgpSpec { kind: DgpKind::Discrete, n: 500 }, RngState::new(1, 0)).unwrap();
        assert!(d
            .intervals()
            .iter()
            .all(|o| o.width() == 1.0 && (o.lower() + 0.5).fract() == 0.0));
        let p = generate(DgpSpec { kind: DgpKind::Parametric, n: 50 }, RngState::new(1, 0)).unwrap();
        assert!(p.has_constant_column());
        assert_eq!(p.covariates().unwrap().ncols(), 2);
    }
}
