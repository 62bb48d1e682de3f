use super::canonical::CanonicalLP;
use super::cell::OutcomeBox;
use super::simplex::{simplex_solve, simplex_solve_from, Basis};
use crate::error::{Error, Result};

/// Largest lattice solved by [`brute_force_lattice`].
pub const MAX_LATTICE_NODES: usize = 1_000_000;

/// Solves the LP at every node of the grid with `points_per_interval`
/// equally spaced values per nondegenerate interval and returns the
/// distinct coefficient vectors (tolerance `1e-9`), in order of discovery.
pub fn brute_force_lattice(
    lp: &CanonicalLP,
    bounds: &OutcomeBox,
    points_per_interval: usize,
) -> Result<Vec<Vec<f64>>> {
    if bounds.len() != lp.n || points_per_interval == 0 {
        return Err(Error::InvalidArgument("box length must equal n and points >= 1".into()));
    }
    let levels: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(lo, hi)| {
            if lo == hi || points_per_interval == 1 {
                vec![lo]
            } else {
                let m = points_per_interval - 1;
                (0..=m).map(|k| lo + (hi - lo) * k as f64 / m as f64).collect()
            }
        })
        .collect();
    let nodes: f64 = levels.iter().map(|l| l.len() as f64).product();
    if nodes > MAX_LATTICE_NODES as f64 {
        return Err(Error::LatticeTooLarge {
            nodes,
            limit: MAX_LATTICE_NODES,
        });
    }
    let mut idx = vec![0usize; lp.n];
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut last: Option<Basis> = None;
    loop {
        let y: Vec<f64> = idx.iter().zip(&levels).map(|(&k, l)| l[k]).collect();
        let sol = match &last {
            Some(b) => simplex_solve_from(lp, &y, b)?,
            None => simplex_solve(lp, &y)?,
        };
        if !out
            .iter()
            .any(|b| b.iter().zip(&sol.beta).all(|(a, c)| (a - c).abs() <= 1e-9))
        {
            out.push(sol.beta.clone());
        }
        last = Some(sol.basis);
        // odometer
        let mut k = 0;
        loop {
            if k == lp.n {
                return Ok(out);
            }
            idx[k] += 1;
            if idx[k] < levels[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}
