use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::canonical::CanonicalLP;
use super::cell::{BasisCell, OutcomeBox};
use super::lowdisc::Kronecker;
use super::simplex::{feas_tol, simplex_solve, simplex_solve_from};
use crate::data::RngState;
use crate::error::{Error, Result};

/// Probing schedule for [`enumerate_cells`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnumerateConfig {
    /// Stop after this many consecutive covered quasi-random probes.
    pub probe_budget: usize,
    /// Stop discovering cells beyond this count.
    pub cell_cap: usize,
    /// Independent uniform probes for the final coverage estimate.
    pub final_probes: usize,
    /// Directions for the extremal selections.
    pub directions: usize,
    /// Probes on each segment from the box midpoint to an extremal selection.
    pub segment_steps: usize,
    /// Enumerate all box vertices when `n` is at most this.
    pub max_vertex_n: usize,
}

impl Default for EnumerateConfig {
    fn default() -> Self {
        Self {
            probe_budget: 200,
            cell_cap: 2_000,
            final_probes: 10_000,
            directions: 32,
            segment_steps: 8,
            max_vertex_n: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnumerationStatus {
    /// `probe_budget` consecutive probes were covered.
    Converged,
    /// The cell cap was reached first; coverage may be incomplete.
    CellCap,
}

/// Per-coordinate range of the sampled coefficients and any gaps larger
/// than the sampling resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectednessReport {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// `(coordinate, gap start, gap end)`.
    pub gaps: Vec<(usize, f64, f64)>,
}

/// Union of basis cells discovered by probing, with a sampled coefficient
/// cloud.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetBLPEstimate {
    pub cells: Vec<BasisCell>,
    /// `(beta, cell id)`.
    pub beta_samples: Vec<(Vec<f64>, usize)>,
    /// Fraction of the final independent probes covered by some cell.
    pub coverage_report: f64,
    pub status: EnumerationStatus,
    pub probes: usize,
    pub connectedness: ConnectednessReport,
}

impl SetBLPEstimate {
    /// Cell covering `y`, if any.
    pub fn covering_cell(&self, y: &[f64]) -> Option<&BasisCell> {
        let tol = feas_tol(y);
        self.cells.iter().find(|c| c.contains(y, tol))
    }

    /// Euclidean distance from `beta` to the nearest sampled coefficient.
    pub fn distance_to_cloud(&self, beta: &[f64]) -> f64 {
        self.beta_samples
            .iter()
            .map(|(b, _)| b.iter().zip(beta).map(|(a, c)| (a - c).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }
}

fn check_box(lp: &CanonicalLP, bounds: &OutcomeBox) -> Result<()> {
    if bounds.len() != lp.n {
        return Err(Error::InvalidArgument(format!("box has {} intervals, need {}", bounds.len(), lp.n)));
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::InfiniteEndpoint(format!("box interval {i}")));
        }
        if lo > hi {
            return Err(Error::Inverted { row: i, lower: lo, upper: hi });
        }
    }
    Ok(())
}

fn directions<R: Rng + ?Sized>(p: usize, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    match p {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..k)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / k as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut out: Vec<Vec<f64>> = Vec::with_capacity(2 * p + k);
            for c in 0..p {
                for s in [1.0, -1.0] {
                    let mut d = vec![0.0; p];
                    d[c] = s;
                    out.push(d);
                }
            }
            for _ in 0..k {
                let d: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                out.push(d.into_iter().map(|v| v / norm).collect());
            }
            out
        }
    }
}

/// Structured probes: corners, midpoint, all vertices of small boxes, and
/// selections pushing the least-squares fit toward each direction together
/// with points on the segments reaching them from the midpoint.
fn structured_probes<R: Rng + ?Sized>(
    lp: &CanonicalLP,
    bounds: &OutcomeBox,
    cfg: &EnumerateConfig,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let n = lp.n;
    let lower: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let upper: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    let mid: Vec<f64> = bounds.iter().map(|b| 0.5 * (b.0 + b.1)).collect();
    let mut out = vec![lower, upper, mid.clone()];
    if n <= cfg.max_vertex_n {
        for mask in 0u64..(1 << n) {
            out.push(
                (0..n)
                    .map(|i| if mask >> i & 1 == 1 { bounds[i].1 } else { bounds[i].0 })
                    .collect(),
            );
        }
    }
    let p = lp.p;
    let xtx = DMatrix::from_fn(p, p, |r, c| (0..n).map(|i| lp.row(i)[r] * lp.row(i)[c]).sum::<f64>());
    let Some(xtx_inv) = xtx.try_inverse() else {
        return out;
    };
    for d in directions(p, cfg.directions, rng) {
        let w: Vec<f64> = (0..p).map(|c| (0..p).map(|r| d[r] * xtx_inv[(r, c)]).sum()).collect();
        let ext: Vec<f64> = (0..n)
            .map(|i| {
                let s: f64 = lp.row(i).iter().zip(&w).map(|(a, b)| a * b).sum();
                if s >= 0.0 {
                    bounds[i].1
                } else {
                    bounds[i].0
                }
            })
            .collect();
        for k in 1..cfg.segment_steps {
            let t = k as f64 / cfg.segment_steps as f64;
            out.push(mid.iter().zip(&ext).map(|(m, e)| m + t * (e - m)).collect());
        }
        out.push(ext);
    }
    out
}

/// Index of a cell covering `y`, trying `hint` first.
fn find_cover(cells: &[BasisCell], y: &[f64], hint: Option<usize>) -> Option<usize> {
    let tol = feas_tol(y);
    if let Some(h) = hint {
        if cells[h].contains(y, tol) {
            return Some(h);
        }
    }
    if cells.len() > 64 {
        cells.par_iter().position_first(|c| c.contains(y, tol))
    } else {
        cells.iter().position(|c| c.contains(y, tol))
    }
}

fn connectedness(samples: &[(Vec<f64>, usize)], p: usize) -> ConnectednessReport {
    let mut min = vec![f64::INFINITY; p];
    let mut max = vec![f64::NEG_INFINITY; p];
    let mut gaps = Vec::new();
    for c in 0..p {
        let mut v: Vec<f64> = samples.iter().map(|(b, _)| b[c]).collect();
        if v.is_empty() {
            continue;
        }
        v.sort_by(f64::total_cmp);
        min[c] = v[0];
        max[c] = v[v.len() - 1];
        let range = max[c] - min[c];
        let resolution = (4.0 * range / (v.len() as f64).sqrt()).max(1e-9);
        for w in v.windows(2) {
            if w[1] - w[0] > resolution {
                log::warn!("coefficient {c}: gap ({}, {}) in the sampled set", w[0], w[1]);
                gaps.push((c, w[0], w[1]));
            }
        }
    }
    ConnectednessReport { min, max, gaps }
}

/// Covers the outcome box by basis cells. Each uncovered probe is solved
/// (warm-started from the most recent covering cell) and its optimal basis
/// added as a cell.
pub fn enumerate_cells(
    lp: &CanonicalLP,
    bounds: &OutcomeBox,
    cfg: &EnumerateConfig,
    rng: RngState,
) -> Result<SetBLPEstimate> {
    check_box(lp, bounds)?;
    if cfg.probe_budget == 0 || cfg.cell_cap == 0 {
        return Err(Error::InvalidArgument("probe budget and cell cap must be positive".into()));
    }
    let mut r = rng.derive(0).rng();
    let mut cells: Vec<BasisCell> = Vec::new();
    let mut samples = Vec::new();
    let mut hint: Option<usize> = None;
    let mut probes = 0usize;
    let mut status = EnumerationStatus::Converged;

    let mut visit = |y: Vec<f64>, cells: &mut Vec<BasisCell>, hint: &mut Option<usize>| -> Result<Option<bool>> {
        probes += 1;
        if let Some(c) = find_cover(cells, &y, *hint) {
            *hint = Some(c);
            samples.push((cells[c].beta(&y), cells[c].id));
            return Ok(Some(true));
        }
        if cells.len() >= cfg.cell_cap {
            return Ok(None);
        }
        let sol = match *hint {
            Some(h) => simplex_solve_from(lp, &y, &cells[h].basis)?,
            None => simplex_solve(lp, &y)?,
        };
        let id = cells.len();
        let cell = BasisCell::new(lp, id, sol.basis, y.clone())?;
        if !cell.contains(&y, feas_tol(&y) * 10.0) {
            return Err(Error::Invariant("optimal basis does not cover its witness".into()));
        }
        samples.push((sol.beta, id));
        cells.push(cell);
        *hint = Some(id);
        Ok(Some(false))
    };

    for y in structured_probes(lp, bounds, cfg, &mut r) {
        if visit(y, &mut cells, &mut hint)?.is_none() {
            status = EnumerationStatus::CellCap;
            break;
        }
    }
    if status == EnumerationStatus::Converged {
        let mut seq = Kronecker::new(lp.n, &mut r);
        let mut run = 0;
        while run < cfg.probe_budget {
            let u = seq.next_point();
            let y: Vec<f64> = bounds.iter().zip(&u).map(|(b, t)| b.0 + t * (b.1 - b.0)).collect();
            match visit(y, &mut cells, &mut hint)? {
                Some(true) => run += 1,
                Some(false) => run = 0,
                None => {
                    status = EnumerationStatus::CellCap;
                    break;
                }
            }
        }
    }

    // Final coverage on independent uniform probes.
    let final_rng = rng.derive(1);
    let checks: Vec<Option<(Vec<f64>, usize)>> = (0..cfg.final_probes)
        .into_par_iter()
        .map(|k| {
            let mut rr = final_rng.derive(k as u64).rng();
            let y: Vec<f64> = bounds.iter().map(|b| b.0 + rr.random::<f64>() * (b.1 - b.0)).collect();
            find_cover(&cells, &y, None).map(|c| (cells[c].beta(&y), cells[c].id))
        })
        .collect();
    let covered = checks.iter().filter(|c| c.is_some()).count();
    let coverage_report = if cfg.final_probes == 0 {
        f64::NAN
    } else {
        covered as f64 / cfg.final_probes as f64
    };
    samples.extend(checks.into_iter().flatten());
    if status == EnumerationStatus::CellCap && coverage_report < 0.999 {
        log::warn!(
            "cell cap {} reached with coverage {coverage_report:.4}",
            cfg.cell_cap
        );
    }
    let connectedness = connectedness(&samples, lp.p);
    Ok(SetBLPEstimate {
        cells,
        beta_samples: samples,
        coverage_report,
        status,
        probes,
        connectedness,
    })
}
