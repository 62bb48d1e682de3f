//! Unconditional quantile sets of interval data.
//!
//! With `Y = [a, b]` the sharp identification set of the `tau`-quantile is
//! `[q_a(tau), q_b(tau)]`, estimated by order statistics of the endpoints.
//! Continuous endpoints give root-n asymptotics with covariance
//! [`sigma_continuous`]; discrete endpoints are super-consistent
//! ([`quantile_set_discrete`]) and admit inference after jittering
//! ([`jitter`]).

mod cov;
pub mod jitter;
mod metric;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cov::{Cov2, PSD_CLIP};
pub use jitter::{
    jitter, quantile_set_jittered, test_quantile_set_jittered, BigSigma, DiscreteJointMass,
    JitteredFit, JitteredSample, XiMatrix,
};
pub use metric::{directed_hausdorff, hausdorff, Bounds, MetricKind};

use crate::data::{IntervalDataset, RngState};
use crate::error::{Error, Result};
use crate::stats::{ceil_rank, check_tau, density_at, floor_rank, order_statistic, upper_quantile};

/// Default number of simulated limit draws for critical values.
pub const DEFAULT_DRAWS: usize = 25_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    ContinuousFloor,
    DiscreteCeil,
    Jittered,
}

/// Estimated quantile set `[lower, upper]` at rank `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileSetEstimate {
    pub tau: f64,
    pub lower: f64,
    pub upper: f64,
    pub variant: Variant,
}

impl Bounds for QuantileSetEstimate {
    fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }
}

impl QuantileSetEstimate {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn endpoint_order_stats(ds: &IntervalDataset, k: usize) -> (f64, f64) {
    (order_statistic(&ds.lowers(), k), order_statistic(&ds.uppers(), k))
}

/// `[a_(floor(n tau)), b_(floor(n tau))]`.
pub fn quantile_set_continuous(ds: &IntervalDataset, tau: f64) -> Result<QuantileSetEstimate> {
    check_tau(tau)?;
    ds.require_finite("quantile_set_continuous")?;
    let n = ds.len();
    let k = floor_rank(n, tau);
    if k < 1 {
        return Err(Error::RankUnderflow {
            n_tau: n as f64 * tau,
        });
    }
    let (lower, upper) = endpoint_order_stats(ds, k);
    Ok(QuantileSetEstimate {
        tau,
        lower,
        upper,
        variant: Variant::ContinuousFloor,
    })
}

/// `[a_(ceil(n tau)), b_(ceil(n tau))]`, the super-consistent estimator for
/// discretely distributed endpoints.
pub fn quantile_set_discrete(ds: &IntervalDataset, tau: f64) -> Result<QuantileSetEstimate> {
    check_tau(tau)?;
    ds.require_finite("quantile_set_discrete")?;
    let k = ceil_rank(ds.len(), tau).max(1);
    let (lower, upper) = endpoint_order_stats(ds, k);
    Ok(QuantileSetEstimate {
        tau,
        lower,
        upper,
        variant: Variant::DiscreteCeil,
    })
}

/// Joint empirical CDF `#{a_i <= s, b_i <= t} / n` (weak inequalities).
pub fn joint_ecdf(ds: &IntervalDataset, s: f64, t: f64) -> f64 {
    ds.intervals()
        .iter()
        .filter(|o| o.lower() <= s && o.upper() <= t)
        .count() as f64
        / ds.len() as f64
}

/// Plug-in covariance of `sqrt(n)(a_(k) - q_a, b_(k) - q_b)`:
/// `tau(1-tau)/f^2` on the diagonal and `(F_ab(q_a, q_b) - tau^2)/(f_a f_b)`
/// off it, with Gaussian-kernel densities (Silverman bandwidth unless given)
/// and the joint empirical CDF.
pub fn sigma_continuous(
    ds: &IntervalDataset,
    tau: f64,
    bandwidths: Option<(f64, f64)>,
) -> Result<Cov2> {
    let est = quantile_set_continuous(ds, tau)?;
    sigma_at(ds, &est, bandwidths)
}

pub(crate) fn sigma_at(
    ds: &IntervalDataset,
    est: &QuantileSetEstimate,
    bandwidths: Option<(f64, f64)>,
) -> Result<Cov2> {
    let tau = est.tau;
    let fa = density_at(&ds.lowers(), bandwidths.map(|b| b.0), est.lower, "q_a")?;
    let fb = density_at(&ds.uppers(), bandwidths.map(|b| b.1), est.upper, "q_b")?;
    // F_ab(q_a, q_b) lies within the Frechet bounds of two tau-quantiles; the
    // ceil rank can overshoot tau by up to 1/n and push the correlation past one.
    let joint = joint_ecdf(ds, est.lower, est.upper).clamp((2.0 * tau - 1.0).max(0.0), tau);
    let v = tau * (1.0 - tau);
    Cov2::new(v / (fa * fa), (joint - tau * tau) / (fa * fb), v / (fb * fb))
}

const MIN_DRAWS: usize = 1_000;
const CHUNK: usize = 4_096;

/// Simulated `(1 - alpha)` quantile of the metric's limit functional of
/// `(z_L, z_U) ~ N(0, sigma)`.
pub fn simulate_critical_value(
    sigma: &Cov2,
    metric: MetricKind,
    alpha: f64,
    draws: usize,
    rng: RngState,
) -> Result<f64> {
    if draws < MIN_DRAWS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_DRAWS} draws, got {draws}"
        )));
    }
    check_tau(alpha)?;
    let factor = sigma.factor();
    // Chunks use independent streams so the result does not depend on the
    // thread count.
    let sims: Vec<f64> = (0..draws.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut r = rng.derive(c as u64).rng();
            let len = CHUNK.min(draws - c * CHUNK);
            (0..len)
                .map(|_| {
                    let (zl, zu) = Cov2::sample(&factor, &mut r);
                    metric.limit(zl, zu)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(upper_quantile(sims, alpha))
}

/// Outcome of a quantile-set test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub metric: MetricKind,
    /// The `sqrt(n)` or `n` factor applied to the distance.
    pub scale: f64,
}

impl TestOutcome {
    pub(crate) fn new(
        distance: f64,
        sample_size: f64,
        critical_value: f64,
        alpha: f64,
        metric: MetricKind,
    ) -> Self {
        let (statistic, scale) = metric.scaled_statistic(distance, sample_size);
        Self {
            statistic,
            critical_value,
            alpha,
            reject: statistic > critical_value,
            metric,
            scale,
        }
    }
}

/// Parameters of a simulated-critical-value test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestConfig {
    pub alpha: f64,
    pub metric: MetricKind,
    pub draws: usize,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            metric: MetricKind::Hausdorff,
            draws: DEFAULT_DRAWS,
        }
    }
}

/// Full continuous-case fit: estimate, covariance, and test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousFit {
    pub estimate: QuantileSetEstimate,
    pub sigma: Cov2,
}

pub fn fit_continuous(ds: &IntervalDataset, tau: f64) -> Result<ContinuousFit> {
    let estimate = quantile_set_continuous(ds, tau)?;
    let sigma = sigma_at(ds, &estimate, None)?;
    Ok(ContinuousFit { estimate, sigma })
}

/// Tests `H0: Theta_0(tau) = hypothesized` against the simulated limit law.
pub fn test_quantile_set<B: Bounds>(
    ds: &IntervalDataset,
    tau: f64,
    hypothesized: &B,
    cfg: &TestConfig,
    rng: RngState,
) -> Result<TestOutcome> {
    let fit = fit_continuous(ds, tau)?;
    test_fit(&fit, ds.len(), hypothesized, cfg, rng)
}

/// Test against several hypotheses reusing one critical value.
pub fn test_fit<B: Bounds>(
    fit: &ContinuousFit,
    n: usize,
    hypothesized: &B,
    cfg: &TestConfig,
    rng: RngState,
) -> Result<TestOutcome> {
    let crit = simulate_critical_value(&fit.sigma, cfg.metric, cfg.alpha, cfg.draws, rng)?;
    let d = cfg.metric.distance(&fit.estimate, hypothesized)?;
    Ok(TestOutcome::new(d, n as f64, crit, cfg.alpha, cfg.metric))
}

/// Marginal quantiles, densities and the joint CDF of `(a, b)` needed by the
/// covariance function of the quantile process.
pub trait QuantileProcessModel {
    fn quantile_a(&self, tau: f64) -> f64;
    fn quantile_b(&self, tau: f64) -> f64;
    fn density_a(&self, x: f64) -> f64;
    fn density_b(&self, x: f64) -> f64;
    fn joint_cdf(&self, s: f64, t: f64) -> f64;
}

/// Plug-in model: floor-rank order statistics, Silverman Gaussian kernel
/// densities and the joint empirical CDF.
pub struct EmpiricalModel<'a> {
    ds: &'a IntervalDataset,
    lowers: Vec<f64>,
    uppers: Vec<f64>,
    bw: (f64, f64),
}

impl<'a> EmpiricalModel<'a> {
    pub fn new(ds: &'a IntervalDataset) -> Result<Self> {
        ds.require_finite("EmpiricalModel")?;
        let lowers = crate::stats::sorted(&ds.lowers());
        let uppers = crate::stats::sorted(&ds.uppers());
        let bw = (
            crate::stats::silverman_bandwidth(&lowers),
            crate::stats::silverman_bandwidth(&uppers),
        );
        Ok(Self {
            ds,
            lowers,
            uppers,
            bw,
        })
    }

    fn rank(&self, tau: f64) -> usize {
        floor_rank(self.lowers.len(), tau).clamp(1, self.lowers.len())
    }
}

impl QuantileProcessModel for EmpiricalModel<'_> {
    fn quantile_a(&self, tau: f64) -> f64 {
        self.lowers[self.rank(tau) - 1]
    }
    fn quantile_b(&self, tau: f64) -> f64 {
        self.uppers[self.rank(tau) - 1]
    }
    fn density_a(&self, x: f64) -> f64 {
        crate::stats::gaussian_kde(&self.lowers, self.bw.0, x)
    }
    fn density_b(&self, x: f64) -> f64 {
        crate::stats::gaussian_kde(&self.uppers, self.bw.1, x)
    }
    fn joint_cdf(&self, s: f64, t: f64) -> f64 {
        joint_ecdf(self.ds, s, t)
    }
}

/// Cross-rank covariance block of the limiting process `(Z_L, Z_U)`:
/// `[[E Z_L(tau) Z_L(t), E Z_L(tau) Z_U(t)], [E Z_U(tau) Z_L(t), E Z_U(tau) Z_U(t)]]`.
/// Not symmetric unless `tau == t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossCovariance {
    pub entries: [[f64; 2]; 2],
}

impl CrossCovariance {
    pub fn into_cov2(self) -> Result<Cov2> {
        Cov2::from_matrix(self.entries)
    }
}

pub fn process_covariance<M: QuantileProcessModel>(
    model: &M,
    tau: f64,
    t: f64,
) -> Result<CrossCovariance> {
    check_tau(tau)?;
    check_tau(t)?;
    let (qa_s, qa_t) = (model.quantile_a(tau), model.quantile_a(t));
    let (qb_s, qb_t) = (model.quantile_b(tau), model.quantile_b(t));
    let dens = [
        ("f_a(q_a(tau))", model.density_a(qa_s)),
        ("f_a(q_a(t))", model.density_a(qa_t)),
        ("f_b(q_b(tau))", model.density_b(qb_s)),
        ("f_b(q_b(t))", model.density_b(qb_t)),
    ];
    for (label, f) in dens {
        if !(f >= 1e-12) {
            return Err(Error::DegenerateDensity {
                at: label.to_string(),
                value: f,
            });
        }
    }
    let [fa_s, fa_t, fb_s, fb_t] = dens.map(|d| d.1);
    let min = tau.min(t);
    let prod = tau * t;
    Ok(CrossCovariance {
        entries: [
            [
                (min - prod) / (fa_s * fa_t),
                (model.joint_cdf(qa_s, qb_t) - prod) / (fa_s * fb_t),
            ],
            [
                (model.joint_cdf(qa_t, qb_s) - prod) / (fb_s * fa_t),
                (min - prod) / (fb_s * fb_t),
            ],
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(pairs: &[(f64, f64)]) -> IntervalDataset {
        IntervalDataset::from_pairs(pairs).unwrap()
    }

    #[test]
    fn continuous_example() {
        let d = ds(&[(1.0, 2.0), (2.0, 3.0), (3.0, 4.0), (4.0, 5.0)]);
        let e = quantile_set_continuous(&d, 0.5).unwrap();
        assert_eq!((e.lower, e.upper), (2.0, 3.0));
    }

    #[test]
    fn continuous_rank_underflow() {
        let d = ds(&[(1.0, 2.0), (2.0, 3.0)]);
        assert!(matches!(
            quantile_set_continuous(&d, 0.3),
            Err(Error::RankUnderflow { .. })
        ));
    }

    #[test]
    fn infinite_endpoint_rejected() {
        let d = ds(&[(f64::NEG_INFINITY, 2.0), (2.0, 3.0)]);
        assert!(matches!(
            quantile_set_continuous(&d, 0.5),
            Err(Error::InfiniteEndpoint(_))
        ));
        assert!(quantile_set_discrete(&d, 0.5).is_err());
    }

    #[test]
    fn degenerate_matches_classical_order_statistic() {
        let ys = [5.0, 1.0, 4.0, 2.0, 3.0, 9.0, 7.0];
        let pairs: Vec<_> = ys.iter().map(|&y| (y, y)).collect();
        let e = quantile_set_continuous(&ds(&pairs), 0.6).unwrap();
        // floor(7 * 0.6) = 4 -> 4th smallest of ys
        assert_eq!((e.lower, e.upper), (4.0, 4.0));
    }

    #[test]
    fn discrete_examples() {
        let d = ds(&[(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]);
        let e = quantile_set_discrete(&d, 0.5).unwrap();
        assert_eq!((e.lower, e.upper), (1.0, 2.0));
        let single = ds(&[(5.0, 7.0)]);
        for tau in [0.01, 0.5, 0.99] {
            let e = quantile_set_discrete(&single, tau).unwrap();
            assert_eq!((e.lower, e.upper), (5.0, 7.0));
        }
    }

    #[test]
    fn sigma_degenerate_intervals_all_equal() {
        let ys = [0.3, 1.1, 1.9, 2.2, 3.5, 4.1, 4.4, 5.0];
        let pairs: Vec<_> = ys.iter().map(|&y| (y, y)).collect();
        let s = sigma_continuous(&ds(&pairs), 0.5, None).unwrap();
        let e = s.entries();
        assert!((e[0][0] - e[1][1]).abs() < 1e-12);
        assert!((e[0][0] - e[0][1]).abs() < 1e-9 * e[0][0]);
    }

    #[test]
    fn comonotone_endpoints_give_psd_sigma_at_ceil_rank() {
        // b = a + 1 and an odd sample: the joint ecdf at the ceil-rank pair is 3/5 > tau
        let ds = IntervalDataset::from_pairs(&[(0.0, 1.0), (0.4, 1.4), (0.9, 1.9), (1.3, 2.3), (2.0, 3.0)]).unwrap();
        let est = quantile_set_discrete(&ds, 0.5).unwrap();
        assert!(joint_ecdf(&ds, est.lower, est.upper) > 0.5);
        let s = sigma_at(&ds, &est, None).unwrap();
        assert!((s.correlation().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn critical_value_of_zero_matrix() {
        let c = simulate_critical_value(
            &Cov2::zero(),
            MetricKind::Hausdorff,
            0.05,
            2_000,
            RngState::new(1, 0),
        )
        .unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn critical_value_needs_draws() {
        assert!(simulate_critical_value(
            &Cov2::identity(),
            MetricKind::Hausdorff,
            0.05,
            10,
            RngState::new(1, 0)
        )
        .is_err());
    }

    #[test]
    fn squared_metric_is_square_of_directed() {
        let rng = RngState::new(3, 9);
        let d = simulate_critical_value(&Cov2::identity(), MetricKind::DirectedHausdorff, 0.05, 20_000, rng)
            .unwrap();
        let d2 = simulate_critical_value(&Cov2::identity(), MetricKind::SquaredDirected, 0.05, 20_000, rng)
            .unwrap();
        assert!((d * d - d2).abs() < 1e-12);
    }

    #[test]
    fn hypothesis_equal_to_estimate_never_rejects() {
        let pairs: Vec<_> = (0..50)
            .map(|i| {
                let v = (i as f64 * 0.61803).fract();
                let w = (i as f64 * 0.41421).fract();
                (0.5 * v + 1.5 * w, 2.5 * v + 1.5 * w)
            })
            .collect();
        let d = ds(&pairs);
        let est = quantile_set_continuous(&d, 0.5).unwrap();
        let out = test_quantile_set(&d, 0.5, &est, &TestConfig::default(), RngState::new(5, 0)).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert!(!out.reject);
        assert!((out.scale - 50f64.sqrt()).abs() < 1e-12);
    }

    struct Uniforms;

    impl QuantileProcessModel for Uniforms {
        fn quantile_a(&self, tau: f64) -> f64 {
            tau
        }
        fn quantile_b(&self, tau: f64) -> f64 {
            tau
        }
        fn density_a(&self, _: f64) -> f64 {
            1.0
        }
        fn density_b(&self, _: f64) -> f64 {
            1.0
        }
        fn joint_cdf(&self, s: f64, t: f64) -> f64 {
            // independent uniforms
            s.clamp(0.0, 1.0) * t.clamp(0.0, 1.0)
        }
    }

    #[test]
    fn process_covariance_uniform() {
        let c = process_covariance(&Uniforms, 0.25, 0.75).unwrap();
        assert!((c.entries[0][0] - 0.0625).abs() < 1e-15);
        assert!(c.entries[0][1].abs() < 1e-15);
        assert!(c.entries[1][0].abs() < 1e-15);
    }

    #[test]
    fn process_covariance_diagonal_matches_sigma() {
        let pairs: Vec<_> = (0..200)
            .map(|i| {
                let v = (i as f64 * 0.754877666).fract();
                let w = (i as f64 * 0.569840291).fract();
                (0.5 * v + 1.5 * w, 2.5 * v + 1.5 * w)
            })
            .collect();
        let d = ds(&pairs);
        let model = EmpiricalModel::new(&d).unwrap();
        let cross = process_covariance(&model, 0.4, 0.4).unwrap();
        let sigma = sigma_continuous(&d, 0.4, None).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let (x, y) = (cross.entries[i][j], sigma.entries()[i][j]);
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{i}{j}: {x} vs {y}");
            }
        }
    }
}
