//! Conditional moment inequalities for linear quantile regression with
//! interval outcomes.
//!
//! `theta` is in the identified set iff
//! `E[(1[y^l <= x'theta] - tau) g(x)] >= 0` and
//! `E[(tau - 1[y^u <= x'theta]) g(x)] >= 0` for every nonnegative `g`.
//! The test uses indicator functions of hypercube cells of the min-max
//! normalized covariates, a Cramér-von Mises type statistic, and a
//! generalized-moment-selection bootstrap for the critical value.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{IntervalDataset, RngState};
use crate::error::{Error, Result};
use crate::stats::{check_tau, upper_quantile};

/// Tuning of the test statistic and the bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentConfig {
    /// Deepest instrument level.
    pub r: usize,
    pub epsilon: f64,
    /// `None` means `(0.3 ln n)^(1/2)`.
    pub kappa: Option<f64>,
    /// `None` means `(0.4 ln n / ln ln n)^(1/2)`.
    pub b_n: Option<f64>,
    pub bootstrap: usize,
    pub alpha: f64,
    pub eta: f64,
}

impl Default for MomentConfig {
    fn default() -> Self {
        Self {
            r: 2,
            epsilon: 0.05,
            kappa: None,
            b_n: None,
            bootstrap: 1_000,
            alpha: 0.05,
            eta: 1e-6,
        }
    }
}

impl MomentConfig {
    pub fn kappa_n(&self, n: usize) -> f64 {
        self.kappa.unwrap_or_else(|| (0.3 * (n as f64).ln()).sqrt())
    }

    pub fn b_n(&self, n: usize) -> Result<f64> {
        if let Some(b) = self.b_n {
            return Ok(b);
        }
        let ln = (n as f64).ln();
        if n < 3 {
            return Err(Error::InvalidArgument("default B_n needs n >= 3".into()));
        }
        Ok((0.4 * ln / ln.ln()).sqrt())
    }

    fn validate(&self) -> Result<()> {
        check_tau(self.alpha)?;
        if self.r == 0 || !(self.epsilon > 0.0) || !(self.eta >= 0.0) {
            return Err(Error::InvalidArgument("need R >= 1, epsilon > 0, eta >= 0".into()));
        }
        Ok(())
    }
}

/// A candidate coefficient vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint(pub Vec<f64>);

impl ThetaPoint {
    pub fn index(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.0).map(|(a, b)| a * b).sum()
    }
}

/// `(1[y^l <= x'theta] - tau, tau - 1[y^u <= x'theta])`.
pub fn moments(x: &[f64], lower: f64, upper: f64, theta: &ThetaPoint, tau: f64) -> (f64, f64) {
    let q = theta.index(x);
    let ind = |y: f64| if y <= q { 1.0 } else { 0.0 };
    (ind(lower) - tau, tau - ind(upper))
}

/// Cell of `z` in `(0,1]` at depth `r`: `ceil(2 r z)` clamped to `1..=2r`.
fn cell_1d(z: f64, r: usize) -> usize {
    let k = 2 * r;
    ((z * k as f64).ceil() as usize).clamp(1, k)
}

/// Membership of `x_normalized` in each of the `(2r)^p` cells
/// `prod_u ((a_u - 1)/2r, a_u/2r]`, in lexicographic order of `a`.
pub fn box_instruments(x_normalized: &[f64], r: usize) -> Vec<bool> {
    let k = 2 * r;
    let p = x_normalized.len();
    let total = k.pow(p as u32);
    let mut flat = 0;
    for &z in x_normalized {
        flat = flat * k + (cell_1d(z, r) - 1);
    }
    (0..total).map(|c| c == flat).collect()
}

/// Frozen min-max normalization of the non-constant covariates and the
/// cell index of every observation at every depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentGrid {
    pub columns: Vec<usize>,
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    /// `cells[r - 1][i]`: dense index of observation `i`'s cell at depth `r`.
    cells: Vec<Vec<usize>>,
    /// Number of occupied cells per depth.
    occupied: Vec<usize>,
}

impl InstrumentGrid {
    pub fn fit(ds: &IntervalDataset, depth: usize) -> Result<Self> {
        let cov = ds.covariates().ok_or(Error::NoCovariates)?;
        let columns = cov.nonconstant_columns();
        let mut mins = Vec::with_capacity(columns.len());
        let mut maxs = Vec::with_capacity(columns.len());
        for &k in &columns {
            let col = cov.column(k);
            mins.push(col.iter().copied().fold(f64::INFINITY, f64::min));
            maxs.push(col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        let mut grid = Self {
            columns,
            mins,
            maxs,
            cells: Vec::new(),
            occupied: Vec::new(),
        };
        for r in 1..=depth {
            let mut ids = BTreeMap::new();
            let mut cells = Vec::with_capacity(ds.len());
            for i in 0..ds.len() {
                let key: Vec<usize> = grid
                    .normalize(cov.row(i))
                    .iter()
                    .map(|&z| cell_1d(z, r))
                    .collect();
                let next = ids.len();
                cells.push(*ids.entry(key).or_insert(next));
            }
            grid.occupied.push(ids.len());
            grid.cells.push(cells);
        }
        Ok(grid)
    }

    pub fn normalize(&self, row: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .enumerate()
            .map(|(u, &k)| (row[k] - self.mins[u]) / (self.maxs[u] - self.mins[u]))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }
}

/// Per-cell first and second moments of `m1`, `m2` under observation
/// weights (counts).
struct CellMoments {
    /// `[depth][cell] -> (mean1, var1, mean2, var2)`.
    cells: Vec<Vec<[f64; 4]>>,
    var_all: [f64; 2],
}

fn summarize(grid: &InstrumentGrid, m: &[(f64, f64)], weights: Option<&[u32]>) -> CellMoments {
    let n: f64 = match weights {
        Some(w) => w.iter().map(|&c| c as f64).sum(),
        None => m.len() as f64,
    };
    let w = |i: usize| weights.map_or(1.0, |w| w[i] as f64);
    let mut all = [0.0; 4];
    let mut cells = Vec::with_capacity(grid.cells.len());
    for (d, ids) in grid.cells.iter().enumerate() {
        let mut sums = vec![[0.0; 4]; grid.occupied[d]];
        for (i, &(m1, m2)) in m.iter().enumerate() {
            let wi = w(i);
            if wi == 0.0 {
                continue;
            }
            let s = &mut sums[ids[i]];
            s[0] += wi * m1;
            s[1] += wi * m1 * m1;
            s[2] += wi * m2;
            s[3] += wi * m2 * m2;
            if d == 0 {
                all[0] += wi * m1;
                all[1] += wi * m1 * m1;
                all[2] += wi * m2;
                all[3] += wi * m2 * m2;
            }
        }
        cells.push(
            sums.into_iter()
                .map(|s| {
                    let (a, c) = (s[0] / n, s[2] / n);
                    [a, (s[1] / n - a * a).max(0.0), c, (s[3] / n - c * c).max(0.0)]
                })
                .collect(),
        );
    }
    let (a, c) = (all[0] / n, all[2] / n);
    CellMoments {
        cells,
        var_all: [(all[1] / n - a * a).max(0.0), (all[3] / n - c * c).max(0.0)],
    }
}

/// `[x]_-^2` of `num / den`, with `0/0 = 0` and `negative/0 = +inf`.
fn neg_sq(num: f64, den: f64) -> f64 {
    if num >= 0.0 {
        0.0
    } else if den > 0.0 {
        (num / den).powi(2)
    } else {
        f64::INFINITY
    }
}

fn depth_weight(r: usize, p: usize) -> f64 {
    1.0 / ((r * r) as f64 + 100.0) / ((2 * r) as f64).powi(p as i32)
}

/// A dataset prepared for repeated evaluation at many `theta`.
pub struct MomentProblem<'a> {
    ds: &'a IntervalDataset,
    grid: InstrumentGrid,
    cfg: MomentConfig,
    tau: f64,
}

impl<'a> MomentProblem<'a> {
    pub fn new(ds: &'a IntervalDataset, tau: f64, cfg: MomentConfig) -> Result<Self> {
        check_tau(tau)?;
        cfg.validate()?;
        if ds.len() < 2 {
            return Err(Error::DegenerateVariance("need at least two observations".into()));
        }
        let grid = InstrumentGrid::fit(ds, cfg.r)?;
        Ok(Self { ds, grid, cfg, tau })
    }

    pub fn grid(&self) -> &InstrumentGrid {
        &self.grid
    }

    fn moment_values(&self, theta: &ThetaPoint) -> Result<Vec<(f64, f64)>> {
        let cov = self.ds.covariates().expect("checked at construction");
        if theta.0.len() != cov.ncols() {
            return Err(Error::InvalidArgument(format!(
                "theta has {} coefficients, covariates have {} columns",
                theta.0.len(),
                cov.ncols()
            )));
        }
        Ok(self
            .ds
            .intervals()
            .iter()
            .enumerate()
            .map(|(i, o)| moments(cov.row(i), o.lower(), o.upper(), theta, self.tau))
            .collect())
    }

    fn sigma_bar(&self, var_cell: f64, var_all: f64) -> f64 {
        (var_cell + self.cfg.epsilon * var_all).sqrt()
    }

    fn statistic_from(&self, s: &CellMoments) -> f64 {
        let rn = (self.ds.len() as f64).sqrt();
        let p = self.grid.dim();
        let mut t = 0.0;
        for (d, cells) in s.cells.iter().enumerate() {
            let mut inner = 0.0;
            for c in cells {
                inner += neg_sq(rn * c[0], self.sigma_bar(c[1], s.var_all[0]));
                inner += neg_sq(rn * c[2], self.sigma_bar(c[3], s.var_all[1]));
            }
            t += depth_weight(d + 1, p) * inner;
        }
        t
    }

    pub fn statistic(&self, theta: &ThetaPoint) -> Result<f64> {
        let m = self.moment_values(theta)?;
        Ok(self.statistic_from(&summarize(&self.grid, &m, None)))
    }

    /// Statistic and GMS bootstrap critical value (`(1 - alpha)` quantile of
    /// the bootstrap statistics plus `eta`).
    pub fn evaluate(&self, theta: &ThetaPoint, rng: RngState) -> Result<(f64, f64)> {
        let m = self.moment_values(theta)?;
        let base = summarize(&self.grid, &m, None);
        let stat = self.statistic_from(&base);
        let crit = self.bootstrap(&m, &base, rng)?;
        Ok((stat, crit))
    }

    pub fn bootstrap_critical_value(&self, theta: &ThetaPoint, rng: RngState) -> Result<f64> {
        Ok(self.evaluate(theta, rng)?.1)
    }

    fn bootstrap(&self, m: &[(f64, f64)], base: &CellMoments, rng: RngState) -> Result<f64> {
        let n = self.ds.len();
        if self.cfg.bootstrap < 100 {
            return Err(Error::InvalidArgument(format!(
                "need at least 100 bootstrap draws, got {}",
                self.cfg.bootstrap
            )));
        }
        let rn = (n as f64).sqrt();
        let kappa = self.cfg.kappa_n(n);
        let b_n = self.cfg.b_n(n)?;
        let sd_all = [base.var_all[0].sqrt(), base.var_all[1].sqrt()];
        let p = self.grid.dim();
        // GMS slack times sigma_hat(theta, 1), per depth, cell and moment.
        let slack: Vec<Vec<[f64; 2]>> = base
            .cells
            .iter()
            .map(|cells| {
                cells
                    .iter()
                    .map(|c| {
                        let mut out = [0.0; 2];
                        for j in 0..2 {
                            let sb = self.sigma_bar(c[2 * j + 1], base.var_all[j]);
                            let ratio = if sb > 0.0 {
                                rn * c[2 * j] / sb
                            } else if c[2 * j] > 0.0 {
                                f64::INFINITY
                            } else {
                                0.0
                            };
                            // The slack enters divided by sigma_hat(theta, 1); a
                            // constant moment therefore gets unbounded slack.
                            if ratio / kappa > 1.0 {
                                out[j] = if sd_all[j] > 0.0 { b_n * sd_all[j] } else { f64::INFINITY };
                            }
                        }
                        out
                    })
                    .collect()
            })
            .collect();

        let mut r = rng.rng();
        let mut counts = vec![0u32; n];
        let mut draws = Vec::with_capacity(self.cfg.bootstrap);
        for _ in 0..self.cfg.bootstrap {
            counts.iter_mut().for_each(|c| *c = 0);
            for _ in 0..n {
                counts[r.random_range(0..n)] += 1;
            }
            let s = summarize(&self.grid, m, Some(&counts));
            let mut t = 0.0;
            for (d, cells) in s.cells.iter().enumerate() {
                let mut inner = 0.0;
                for (c, (b, gms)) in cells.iter().zip(base.cells[d].iter().zip(&slack[d])) {
                    for j in 0..2 {
                        let num = rn * (c[2 * j] - b[2 * j]) + gms[j];
                        inner += neg_sq(num, self.sigma_bar(c[2 * j + 1], s.var_all[j]));
                    }
                }
                t += depth_weight(d + 1, p) * inner;
            }
            draws.push(t);
        }
        Ok(upper_quantile(draws, self.cfg.alpha) + self.cfg.eta)
    }
}

pub fn test_statistic(ds: &IntervalDataset, theta: &ThetaPoint, tau: f64, cfg: &MomentConfig) -> Result<f64> {
    MomentProblem::new(ds, tau, *cfg)?.statistic(theta)
}

pub fn bootstrap_critical_value(
    ds: &IntervalDataset,
    theta: &ThetaPoint,
    tau: f64,
    cfg: &MomentConfig,
    rng: RngState,
) -> Result<f64> {
    MomentProblem::new(ds, tau, *cfg)?.bootstrap_critical_value(theta, rng)
}

/// One grid point of a confidence-set scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub theta: ThetaPoint,
    pub statistic: f64,
    pub critical_value: f64,
    pub accepted: bool,
    /// Set when this point could not be evaluated.
    pub error: Option<String>,
}

/// Evaluates every grid point; point `k` bootstraps with `rng.derive(k)`.
/// A point whose statistic is zero is accepted without bootstrapping, since
/// the critical value is never below `eta >= 0`.
pub fn confidence_set_scan(
    ds: &IntervalDataset,
    tau: f64,
    grid: &[ThetaPoint],
    cfg: &MomentConfig,
    rng: RngState,
) -> Result<Vec<ScanPoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let problem = MomentProblem::new(ds, tau, *cfg)?;
    Ok(grid
        .par_iter()
        .enumerate()
        .map(|(k, theta)| {
            let res = problem.statistic(theta).and_then(|stat| {
                if stat == 0.0 {
                    Ok((stat, cfg.eta))
                } else {
                    problem.evaluate(theta, rng.derive(k as u64))
                }
            });
            match res {
                Ok((statistic, critical_value)) => ScanPoint {
                    theta: theta.clone(),
                    statistic,
                    critical_value,
                    accepted: statistic <= critical_value,
                    error: None,
                },
                Err(e) => ScanPoint {
                    theta: theta.clone(),
                    statistic: f64::NAN,
                    critical_value: f64::NAN,
                    accepted: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

/// Maximal runs of consecutive accepted points along a scanned line; more
/// than one run means the accepted set is not contiguous on that line.
pub fn accepted_runs(points: &[ScanPoint]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, p) in points.iter().enumerate() {
        match (p.accepted, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, points.len() - 1));
    }
    runs
}
