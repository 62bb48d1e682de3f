//! Inference for integer-valued endpoints by jittering.
//!
//! Adding independent `U(0,1)` noise to integer endpoints gives continuous
//! `ã = a + u`, `b̃ = b + v` whose quantiles map back to those of `a` and `b`
//! through the marginal masses:
//! `q_a = q_ã - (tau - sum_{j < q_a} P(a = j)) / P(a = q_a)`.
//! The de-jittered estimator is asymptotically normal with covariance
//! `Xi Sigma~ Xi'`, where `Sigma~` is the joint covariance of the jittered
//! sample quantiles and the empirical masses.
//!
//! Endpoints may be any integers; internally they are indexed from the
//! smallest observed endpoint, so the support is `{m, ..., m + J - 1}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Bounds, Cov2, QuantileSetEstimate, TestConfig, TestOutcome, Variant};
use crate::data::{IntervalDataset, RngState};
use crate::error::{Error, Result};
use crate::stats::{ceil_rank, check_tau, floor_rank, order_statistic};
use rand::Rng;

/// Largest support size for which `Sigma~` is materialized.
pub const MAX_SUPPORT: usize = 512;

const MASS_TOL: f64 = 1e-12;

fn integer_endpoints(ds: &IntervalDataset) -> Result<(i64, i64)> {
    let mut lo = i64::MAX;
    let mut hi = i64::MIN;
    for (row, o) in ds.intervals().iter().enumerate() {
        for v in [o.lower(), o.upper()] {
            if !v.is_finite() || v.fract() != 0.0 || v.abs() > 1e15 {
                return Err(Error::NonInteger { row, value: v });
            }
            lo = lo.min(v as i64);
            hi = hi.max(v as i64);
        }
    }
    Ok((lo, hi))
}

/// Jittered endpoints `ã = a + u`, `b̃ = b + v`. Kept as two columns rather
/// than intervals because `ã > b̃` is possible when `a = b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitteredSample {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Adds independent `U(0,1)` draws to every lower and upper endpoint.
pub fn jitter(ds: &IntervalDataset, rng: RngState) -> Result<JitteredSample> {
    integer_endpoints(ds)?;
    let mut r = rng.rng();
    let mut lower = Vec::with_capacity(ds.len());
    let mut upper = Vec::with_capacity(ds.len());
    for o in ds.intervals() {
        let u: f64 = r.random();
        let v: f64 = r.random();
        lower.push(o.lower() + u);
        upper.push(o.upper() + v);
    }
    Ok(JitteredSample { lower, upper })
}

/// Empirical (or population) probability masses of integer endpoints on
/// `{offset, ..., offset + J - 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJointMass {
    pub offset: i64,
    pub support: usize,
    pub mass_a: Vec<f64>,
    pub mass_b: Vec<f64>,
    /// Row-major `J x J`, `joint[i * J + j] = P(a = offset + i, b = offset + j)`.
    pub joint: Vec<f64>,
}

impl DiscreteJointMass {
    pub fn from_dataset(ds: &IntervalDataset) -> Result<Self> {
        let (lo, hi) = integer_endpoints(ds)?;
        let support = (hi - lo + 1) as usize;
        if support > MAX_SUPPORT {
            return Err(Error::LatticeTooLarge {
                nodes: support as f64,
                limit: MAX_SUPPORT,
            });
        }
        let w = 1.0 / ds.len() as f64;
        let mut joint = vec![0.0; support * support];
        for o in ds.intervals() {
            let i = (o.lower() as i64 - lo) as usize;
            let j = (o.upper() as i64 - lo) as usize;
            joint[i * support + j] += w;
        }
        Self::from_joint(lo, support, joint)
    }

    /// Builds the marginals from a joint table, checking it sums to one.
    pub fn from_joint(offset: i64, support: usize, joint: Vec<f64>) -> Result<Self> {
        if support == 0 || joint.len() != support * support {
            return Err(Error::InvalidArgument("joint table must be J x J with J >= 1".into()));
        }
        if joint.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidArgument("negative probability mass".into()));
        }
        let total: f64 = joint.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("joint mass sums to {total}")));
        }
        let mut mass_a = vec![0.0; support];
        let mut mass_b = vec![0.0; support];
        for i in 0..support {
            for j in 0..support {
                let p = joint[i * support + j];
                mass_a[i] += p;
                mass_b[j] += p;
            }
        }
        Ok(Self {
            offset,
            support,
            mass_a,
            mass_b,
            joint,
        })
    }

    pub fn joint(&self, i: usize, j: usize) -> f64 {
        self.joint[i * self.support + j]
    }

    fn index(&self, value: f64) -> usize {
        (value as i64 - self.offset) as usize
    }
}

/// The jittered quantile `q_ã(tau)` implied by the masses, given the
/// (integer) quantile of the raw endpoint.
struct Dejitter {
    /// Index of the raw quantile in the support.
    q: usize,
    /// `sum_{j < q} P(j)`.
    below: f64,
    /// `P(q)`.
    at: f64,
}

impl Dejitter {
    fn new(mass: &[f64], q: usize) -> Result<Self> {
        let at = mass[q];
        if !(at > MASS_TOL) {
            return Err(Error::ZeroMass(q as i64));
        }
        let below: f64 = mass[..q].iter().sum();
        Ok(Self { q, below, at })
    }

    fn correction(&self, tau: f64) -> f64 {
        (tau - self.below) / self.at
    }

    /// `q_ã` on the offset scale.
    fn q_tilde(&self, tau: f64) -> f64 {
        self.q as f64 + self.correction(tau)
    }

    fn check_lattice(&self, tau: f64, offset: i64) -> Result<()> {
        let c = self.correction(tau);
        if c <= MASS_TOL || c >= 1.0 - MASS_TOL {
            return Err(Error::LatticeHit(offset as f64 + self.q_tilde(tau)));
        }
        Ok(())
    }

    /// Gradient of the correction's negative with respect to the masses:
    /// the `Xi` entries for one endpoint.
    fn gradient(&self, support: usize, tau: f64) -> Vec<f64> {
        let mut g = vec![0.0; support];
        for gj in g.iter_mut().take(self.q) {
            *gj = 1.0 / self.at;
        }
        g[self.q] = (tau - self.below) / (self.at * self.at);
        g
    }
}

#[inline]
fn unit_clip(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Joint covariance of `(ã_(k), b̃_(k), P̂_a(·), P̂_b(·))`, dimension `2(J+1)`.
/// Index 0 is the jittered lower quantile, 1 the jittered upper quantile,
/// `2..2+J` the lower masses and `2+J..2+2J` the upper masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BigSigma {
    pub support: usize,
    /// Row-major, `dim() x dim()`.
    pub entries: Vec<f64>,
}

impl BigSigma {
    pub fn dim(&self) -> usize {
        2 * (self.support + 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim() + j]
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.entries)
    }

    /// Evaluated at jittered quantiles `(qa, qb)` on the offset scale.
    pub fn new(mass: &DiscreteJointMass, tau: f64, qa: f64, qb: f64) -> Result<Self> {
        let jn = mass.support;
        let d = 2 * (jn + 1);
        let fa = mass.mass_a[(qa.floor() as usize).min(jn - 1)];
        let fb = mass.mass_b[(qb.floor() as usize).min(jn - 1)];
        if !(fa > MASS_TOL && fb > MASS_TOL) {
            return Err(Error::DegenerateDensity {
                at: "jittered quantile".into(),
                value: fa.min(fb),
            });
        }
        let mut m = DMatrix::<f64>::zeros(d, d);
        let pa = 2;
        let pb = 2 + jn;

        let mut f_ab = 0.0;
        for i in 0..jn {
            for j in 0..jn {
                f_ab += mass.joint(i, j) * unit_clip(qa - i as f64) * unit_clip(qb - j as f64);
            }
        }
        m[(0, 0)] = tau * (1.0 - tau) / (fa * fa);
        m[(1, 1)] = tau * (1.0 - tau) / (fb * fb);
        m[(0, 1)] = (f_ab - tau * tau) / (fa * fb);
        m[(1, 0)] = m[(0, 1)];

        for j in 0..jn {
            // P(ã <= qa, a = j) and P(ã <= qa, b = j), and the b̃ analogues.
            let a_with_a = mass.mass_a[j] * unit_clip(qa - j as f64);
            let b_with_b = mass.mass_b[j] * unit_clip(qb - j as f64);
            let mut a_with_b = 0.0;
            let mut b_with_a = 0.0;
            for i in 0..jn {
                a_with_b += mass.joint(i, j) * unit_clip(qa - i as f64);
                b_with_a += mass.joint(j, i) * unit_clip(qb - i as f64);
            }
            let entries = [
                (0, pa + j, -(a_with_a - tau * mass.mass_a[j]) / fa),
                (0, pb + j, -(a_with_b - tau * mass.mass_b[j]) / fa),
                (1, pa + j, -(b_with_a - tau * mass.mass_a[j]) / fb),
                (1, pb + j, -(b_with_b - tau * mass.mass_b[j]) / fb),
            ];
            for (r, c, v) in entries {
                m[(r, c)] = v;
                m[(c, r)] = v;
            }
        }
        for i in 0..jn {
            for j in 0..jn {
                let aa = if i == j { mass.mass_a[i] } else { 0.0 } - mass.mass_a[i] * mass.mass_a[j];
                let bb = if i == j { mass.mass_b[i] } else { 0.0 } - mass.mass_b[i] * mass.mass_b[j];
                let ab = mass.joint(i, j) - mass.mass_a[i] * mass.mass_b[j];
                m[(pa + i, pa + j)] = aa;
                m[(pb + i, pb + j)] = bb;
                m[(pa + i, pb + j)] = ab;
                m[(pb + j, pa + i)] = ab;
            }
        }
        Ok(Self {
            support: jn,
            entries: m.transpose().as_slice().to_vec(),
        })
    }
}

/// Jacobian of the de-jittered pair with respect to the `BigSigma` vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiMatrix {
    pub support: usize,
    pub rows: [Vec<f64>; 2],
}

impl XiMatrix {
    fn new(support: usize, grad_a: &[f64], grad_b: &[f64]) -> Self {
        let d = 2 * (support + 1);
        let mut r1 = vec![0.0; d];
        let mut r2 = vec![0.0; d];
        r1[0] = 1.0;
        r2[1] = 1.0;
        r1[2..2 + support].copy_from_slice(grad_a);
        r2[2 + support..].copy_from_slice(grad_b);
        Self {
            support,
            rows: [r1, r2],
        }
    }

    /// `Xi S Xi'`.
    pub fn sandwich(&self, s: &BigSigma) -> Result<Cov2> {
        let d = s.dim();
        let xi = DMatrix::from_fn(2, d, |i, j| self.rows[i][j]);
        let v = &xi * s.matrix() * xi.transpose();
        Cov2::from_matrix([[v[(0, 0)], v[(0, 1)]], [v[(1, 0)], v[(1, 1)]]])
    }
}

/// De-jittered estimate with its covariance and the pieces behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitteredFit {
    pub estimate: QuantileSetEstimate,
    pub sigma: Cov2,
    /// `(ã_(k), b̃_(k))`.
    pub jittered_quantiles: (f64, f64),
    pub masses: DiscreteJointMass,
    pub big_sigma: BigSigma,
    pub xi: XiMatrix,
}

/// `[ǎ(tau), b̌(tau)]` with covariance `Xi Sigma~ Xi'`, masses from the raw
/// integer data and the order statistics from one jittered copy of it.
pub fn quantile_set_jittered(ds: &IntervalDataset, tau: f64, rng: RngState) -> Result<JitteredFit> {
    check_tau(tau)?;
    let masses = DiscreteJointMass::from_dataset(ds)?;
    let n = ds.len();
    let k = floor_rank(n, tau);
    if k < 1 {
        return Err(Error::RankUnderflow { n_tau: n as f64 * tau });
    }
    let kc = ceil_rank(n, tau).max(1);
    let qa = masses.index(order_statistic(&ds.lowers(), kc));
    let qb = masses.index(order_statistic(&ds.uppers(), kc));
    let da = Dejitter::new(&masses.mass_a, qa)?;
    let db = Dejitter::new(&masses.mass_b, qb)?;
    da.check_lattice(tau, masses.offset)?;
    db.check_lattice(tau, masses.offset)?;

    let jit = jitter(ds, rng)?;
    let ja = order_statistic(&jit.lower, k);
    let jb = order_statistic(&jit.upper, k);
    for v in [ja, jb] {
        if v.fract() == 0.0 {
            return Err(Error::LatticeHit(v));
        }
    }
    let lower = ja - da.correction(tau);
    let upper = jb - db.correction(tau);

    let big_sigma = BigSigma::new(&masses, tau, da.q_tilde(tau), db.q_tilde(tau))?;
    let xi = XiMatrix::new(
        masses.support,
        &da.gradient(masses.support, tau),
        &db.gradient(masses.support, tau),
    );
    let sigma = xi.sandwich(&big_sigma)?;
    Ok(JitteredFit {
        estimate: QuantileSetEstimate {
            tau,
            lower,
            upper: upper.max(lower),
            variant: Variant::Jittered,
        },
        sigma,
        jittered_quantiles: (ja, jb),
        masses,
        big_sigma,
        xi,
    })
}

/// Test of `H0: Theta_0(tau) = hypothesized` for integer-valued endpoints.
/// The jitter draw uses stream `rng.derive(0)` and the critical value
/// simulation `rng.derive(1)`.
pub fn test_quantile_set_jittered<B: Bounds>(
    ds: &IntervalDataset,
    tau: f64,
    hypothesized: &B,
    cfg: &TestConfig,
    rng: RngState,
) -> Result<(JitteredFit, TestOutcome)> {
    let fit = quantile_set_jittered(ds, tau, rng.derive(0))?;
    let crit = super::simulate_critical_value(&fit.sigma, cfg.metric, cfg.alpha, cfg.draws, rng.derive(1))?;
    let d = cfg.metric.distance(&fit.estimate, hypothesized)?;
    let outcome = TestOutcome::new(d, ds.len() as f64, crit, cfg.alpha, cfg.metric);
    Ok((fit, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(pairs: &[(f64, f64)]) -> IntervalDataset {
        IntervalDataset::from_pairs(pairs).unwrap()
    }

    #[test]
    fn jitter_stays_in_unit_cell() {
        let d = ds(&[(0.0, 0.0); 50]);
        let j = jitter(&d, RngState::new(4, 0)).unwrap();
        assert!(j.lower.iter().all(|&a| a > 0.0 && a < 1.0));
        assert_eq!(j, jitter(&d, RngState::new(4, 0)).unwrap());
    }

    #[test]
    fn jitter_rejects_fractions() {
        let d = ds(&[(0.5, 1.0)]);
        assert!(matches!(jitter(&d, RngState::new(1, 0)), Err(Error::NonInteger { .. })));
    }

    #[test]
    fn masses_from_data() {
        let d = ds(&[(0.0, 1.0), (0.0, 2.0), (1.0, 2.0), (2.0, 2.0)]);
        let m = DiscreteJointMass::from_dataset(&d).unwrap();
        assert_eq!(m.support, 3);
        assert_eq!(m.mass_a, vec![0.5, 0.25, 0.25]);
        assert_eq!(m.mass_b, vec![0.0, 0.25, 0.75]);
        assert_eq!(m.joint(0, 2), 0.25);
    }

    #[test]
    fn single_atom_dejitters_by_tau() {
        let d = ds(&[(0.0, 0.0); 101]);
        let fit = quantile_set_jittered(&d, 0.3, RngState::new(2, 0)).unwrap();
        let (ja, _) = fit.jittered_quantiles;
        assert!((fit.estimate.lower - (ja - 0.3)).abs() < 1e-15);
    }

    #[test]
    fn zero_mass_cannot_occur_at_ceil_quantile_but_lattice_can() {
        // tau = 0.5 with half the mass at 0: q_ã = 1 exactly.
        let d = ds(&[(0.0, 1.0), (0.0, 1.0), (1.0, 2.0), (1.0, 2.0)]);
        assert!(matches!(
            quantile_set_jittered(&d, 0.5, RngState::new(1, 0)),
            Err(Error::LatticeHit(_))
        ));
    }

    #[test]
    fn xi_layout() {
        let g = [1.0, 2.0];
        let xi = XiMatrix::new(2, &g, &[3.0, 4.0]);
        assert_eq!(xi.rows[0], vec![1.0, 0.0, 1.0, 2.0, 0.0, 0.0]);
        assert_eq!(xi.rows[1], vec![0.0, 1.0, 0.0, 0.0, 3.0, 4.0]);
    }

    #[test]
    fn big_sigma_symmetric() {
        let m = DiscreteJointMass::from_joint(0, 2, vec![0.3, 0.3, 0.1, 0.3]).unwrap();
        let s = BigSigma::new(&m, 0.5, 0.8, 1.4).unwrap();
        for i in 0..s.dim() {
            for j in 0..s.dim() {
                assert!((s.get(i, j) - s.get(j, i)).abs() < 1e-15);
            }
        }
        // mass block rows sum to zero
        let row: f64 = (2..4).map(|j| s.get(2, j)).sum();
        assert!(row.abs() < 1e-15);
    }
}
