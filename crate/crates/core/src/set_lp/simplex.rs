//! Simplex method specialised to the check-loss LP.
//!
//! A basis of the canonical LP is determined by a set `h` of `p` rows with
//! zero residual (`X_h` invertible) and, for every other row, which of
//! `u_i`, `v_i` is basic (the sign of the residual). Pivots therefore cost
//! `O(n p^2)` instead of touching the dense `(n - p) x 2n` tableau.
//! Entering and leaving choices follow Bland's lowest-index rule on the
//! canonical variable numbering.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::canonical::{invert, CanonicalLP};
use crate::error::{Error, Result};

/// Reduced costs below `-DUAL_TOL` are improving.
pub const DUAL_TOL: f64 = 1e-9;
/// Pivot elements smaller than this are treated as zero.
pub const PIVOT_TOL: f64 = 1e-12;

/// Combinatorial description of a simplex basis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Basis {
    /// Interpolated rows, in the order of the rows of `X_h`.
    pub h: Vec<usize>,
    /// `+1` if `u_i` is basic, `-1` if `v_i` is basic, `0` for rows in `h`.
    pub signs: Vec<i8>,
}

/// Numerical state of a basis: `X_h^{-1}` and `Z = X X_h^{-1}`.
pub(crate) struct Factored {
    pub basis: Basis,
    /// Row-major `p x p`.
    pub xh_inv: Vec<f64>,
    /// Row-major `n x p`.
    pub z: Vec<f64>,
}

impl Factored {
    pub fn new(lp: &CanonicalLP, basis: Basis) -> Result<Self> {
        let p = lp.p;
        let xh = DMatrix::from_fn(p, p, |r, c| lp.row(basis.h[r])[c]);
        let inv = invert(xh)?;
        let xh_inv: Vec<f64> = inv.transpose().as_slice().to_vec();
        let mut z = vec![0.0; lp.n * p];
        for i in 0..lp.n {
            let xi = lp.row(i);
            for c in 0..p {
                z[i * p + c] = (0..p).map(|k| xi[k] * xh_inv[k * p + c]).sum();
            }
        }
        Ok(Self { basis, xh_inv, z })
    }

    pub fn beta(&self, y: &[f64]) -> Vec<f64> {
        beta_of(&self.xh_inv, &self.basis.h, y)
    }

    /// Residuals `y_i - x_i' beta`, zero on `h` by construction.
    pub fn residuals(&self, lp: &CanonicalLP, y: &[f64]) -> Vec<f64> {
        let p = lp.p;
        let yh: Vec<f64> = self.basis.h.iter().map(|&i| y[i]).collect();
        (0..lp.n)
            .map(|i| {
                if self.basis.signs[i] == 0 {
                    0.0
                } else {
                    y[i] - (0..p).map(|c| self.z[i * p + c] * yh[c]).sum::<f64>()
                }
            })
            .collect()
    }

    /// `g_c = sum_{i not in h} w_i z_ic` with `w_i = tau` or `-(1 - tau)`.
    fn g(&self, lp: &CanonicalLP) -> Vec<f64> {
        let p = lp.p;
        let mut g = vec![0.0; p];
        for i in 0..lp.n {
            let w = match self.basis.signs[i] {
                1 => lp.tau,
                -1 => -(1.0 - lp.tau),
                _ => continue,
            };
            for c in 0..p {
                g[c] += w * self.z[i * p + c];
            }
        }
        g
    }

    /// Reduced costs of `(u_j, v_j)` for `j = h[c]`.
    pub fn reduced_costs(&self, lp: &CanonicalLP) -> Vec<(f64, f64)> {
        self.g(lp)
            .into_iter()
            .map(|g| (lp.tau + g, 1.0 - lp.tau - g))
            .collect()
    }

    fn z_at(&self, i: usize, c: usize, p: usize) -> f64 {
        self.z[i * p + c]
    }
}

pub(crate) fn beta_of(xh_inv: &[f64], h: &[usize], y: &[f64]) -> Vec<f64> {
    let p = h.len();
    (0..p)
        .map(|r| (0..p).map(|c| xh_inv[r * p + c] * y[h[c]]).sum())
        .collect()
}

/// Canonical index of `u_i` (or `v_i` when `upper`).
fn var_index(lp: &CanonicalLP, row: usize, v: bool) -> usize {
    lp.position(row) + if v { lp.n } else { 0 }
}

fn basic_index(lp: &CanonicalLP, basis: &Basis, row: usize) -> usize {
    var_index(lp, row, basis.signs[row] < 0)
}

/// Absolute feasibility tolerance for outcome vector `y`.
pub fn feas_tol(y: &[f64]) -> f64 {
    1e-9 * (1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Optimal basis and solution for one outcome vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexSolution {
    pub basis: Basis,
    /// Canonical `(u, v)` in permuted layout, length `2n`.
    pub x_tilde: Vec<f64>,
    pub beta: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

fn iteration_cap(n: usize) -> usize {
    100 * n + 1_000
}

fn stall(iterations: usize, reason: impl Into<String>) -> Error {
    Error::SimplexStall {
        iterations,
        reason: reason.into(),
    }
}

fn pivot_into(lp: &CanonicalLP, f: Factored, col: usize, leaving: usize, entering_sign: i8) -> Result<Factored> {
    let mut b = f.basis;
    let j = b.h[col];
    b.h[col] = leaving;
    b.signs[leaving] = 0;
    b.signs[j] = entering_sign;
    Factored::new(lp, b)
}

/// Primal simplex from a primal-feasible basis.
fn primal(lp: &CanonicalLP, y: &[f64], mut f: Factored, iters: &mut usize) -> Result<Factored> {
    let (n, p) = (lp.n, lp.p);
    let tol = feas_tol(y);
    loop {
        if *iters > iteration_cap(n) {
            return Err(stall(*iters, "iteration cap in primal phase"));
        }
        // Entering: lowest canonical index with negative reduced cost.
        let rc = f.reduced_costs(lp);
        let mut entering: Option<(usize, usize, bool)> = None;
        for (c, &(du, dv)) in rc.iter().enumerate() {
            let j = f.basis.h[c];
            for (d, is_v) in [(du, false), (dv, true)] {
                if d < -DUAL_TOL {
                    let idx = var_index(lp, j, is_v);
                    if entering.is_none_or(|e| idx < e.0) {
                        entering = Some((idx, c, is_v));
                    }
                }
            }
        }
        let Some((_, col, is_v)) = entering else {
            return Ok(f);
        };
        let r = f.residuals(lp, y);
        let dir = if is_v { -1.0 } else { 1.0 };
        let mut leave: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            let s = f.basis.signs[i] as f64;
            if s == 0.0 {
                continue;
            }
            let rate = s * dir * f.z_at(i, col, p);
            if rate < -PIVOT_TOL {
                let t = (s * r[i]).max(0.0) / -rate;
                let idx = basic_index(lp, &f.basis, i);
                let better = match leave {
                    None => true,
                    Some((bt, bidx, _)) => {
                        let slack = 1e-12 * (1.0 + bt.abs()) + tol * 1e-3;
                        t < bt - slack || (t <= bt + slack && idx < bidx)
                    }
                };
                if better {
                    leave = Some((t, idx, i));
                }
            }
        }
        let Some((_, _, l)) = leave else {
            return Err(Error::Invariant("check-loss LP reported unbounded".into()));
        };
        f = pivot_into(lp, f, col, l, if is_v { -1 } else { 1 })?;
        *iters += 1;
    }
}

/// Dual simplex from a dual-feasible basis.
fn dual(lp: &CanonicalLP, y: &[f64], mut f: Factored, iters: &mut usize) -> Result<Factored> {
    let (n, p) = (lp.n, lp.p);
    let tol = feas_tol(y);
    loop {
        if *iters > iteration_cap(n) {
            return Err(stall(*iters, "iteration cap in dual phase"));
        }
        let r = f.residuals(lp, y);
        let mut leave: Option<(usize, usize)> = None;
        for i in 0..n {
            let s = f.basis.signs[i] as f64;
            if s != 0.0 && s * r[i] < -tol {
                let idx = basic_index(lp, &f.basis, i);
                if leave.is_none_or(|l| idx < l.0) {
                    leave = Some((idx, i));
                }
            }
        }
        let Some((_, l)) = leave else {
            return Ok(f);
        };
        let s_l = f.basis.signs[l];
        let rc = f.reduced_costs(lp);
        // The opposite-sign variable of row l always qualifies: rate 1, cost 1.
        let mut best = (1.0, var_index(lp, l, s_l > 0), None::<(usize, bool)>);
        for (c, &(du, dv)) in rc.iter().enumerate() {
            let z = f.z_at(l, c, p) * s_l as f64;
            if z.abs() <= PIVOT_TOL {
                continue;
            }
            // Raising u_j moves r_l by +z_lc, raising v_j by -z_lc; we need
            // s_l r_l to increase.
            let (d, is_v, rate) = if z > 0.0 { (du, false, z) } else { (dv, true, -z) };
            let ratio = d.max(0.0) / rate;
            let idx = var_index(lp, f.basis.h[c], is_v);
            let slack = 1e-12 * (1.0 + best.0);
            if ratio < best.0 - slack || (ratio <= best.0 + slack && idx < best.1) {
                best = (ratio, idx, Some((c, is_v)));
            }
        }
        f = match best.2 {
            None => {
                let mut b = f.basis;
                b.signs[l] = -s_l;
                Factored { basis: b, ..f }
            }
            Some((col, is_v)) => pivot_into(lp, f, col, l, if is_v { -1 } else { 1 })?,
        };
        *iters += 1;
    }
}

fn is_dual_feasible(f: &Factored, lp: &CanonicalLP) -> bool {
    f.reduced_costs(lp)
        .iter()
        .all(|&(du, dv)| du >= -DUAL_TOL && dv >= -DUAL_TOL)
}

fn finish(lp: &CanonicalLP, y: &[f64], f: Factored, iterations: usize) -> Result<SimplexSolution> {
    let r = f.residuals(lp, y);
    let tol = feas_tol(y);
    let mut u = vec![0.0; lp.n];
    let mut v = vec![0.0; lp.n];
    for i in 0..lp.n {
        match f.basis.signs[i] {
            1 => u[i] = r[i].max(0.0),
            -1 => v[i] = (-r[i]).max(0.0),
            _ => {}
        }
        if (f.basis.signs[i] as f64) * r[i] < -tol * 10.0 {
            return Err(Error::Invariant(format!("infeasible final basis at row {i}")));
        }
    }
    let objective = u.iter().sum::<f64>() * lp.tau + v.iter().sum::<f64>() * (1.0 - lp.tau);
    Ok(SimplexSolution {
        beta: f.beta(y),
        x_tilde: lp.to_canonical_vector(&u, &v),
        basis: f.basis,
        objective,
        iterations,
    })
}

fn check_y(lp: &CanonicalLP, y: &[f64]) -> Result<()> {
    if y.len() != lp.n || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "outcome vector must have {} finite entries",
            lp.n
        )));
    }
    Ok(())
}

fn feasible_signs(lp: &CanonicalLP, h: Vec<usize>, y: &[f64]) -> Result<Factored> {
    let mut signs = vec![1i8; lp.n];
    for &i in &h {
        signs[i] = 0;
    }
    let f = Factored::new(lp, Basis { h, signs })?;
    let r = f.residuals(lp, y);
    let mut b = f.basis;
    for i in 0..lp.n {
        if b.signs[i] != 0 && r[i] < 0.0 {
            b.signs[i] = -1;
        }
    }
    Ok(Factored { basis: b, ..f })
}

/// Solves the check-loss LP at `y` by the primal simplex method, starting
/// from the pivot rows of the canonical form.
pub fn simplex_solve(lp: &CanonicalLP, y: &[f64]) -> Result<SimplexSolution> {
    check_y(lp, y)?;
    let f = feasible_signs(lp, lp.perm[..lp.p].to_vec(), y)?;
    let mut iters = 0;
    let f = primal(lp, y, f, &mut iters)?;
    finish(lp, y, f, iters)
}

/// Solves at `y` starting from `start`, typically the optimal basis for a
/// nearby outcome vector. Optimality of a basis does not depend on `y`, so
/// the dual simplex method restores feasibility in few pivots.
pub fn simplex_solve_from(lp: &CanonicalLP, y: &[f64], start: &Basis) -> Result<SimplexSolution> {
    check_y(lp, y)?;
    let f = Factored::new(lp, start.clone())?;
    let mut iters = 0;
    let f = if is_dual_feasible(&f, lp) {
        let f = dual(lp, y, f, &mut iters)?;
        // Guard against drift: polish with the primal method.
        primal(lp, y, f, &mut iters)?
    } else {
        let f = feasible_signs(lp, f.basis.h, y)?;
        primal(lp, y, f, &mut iters)?
    };
    finish(lp, y, f, iters)
}

/// `sum_i rho_tau(y_i - x_i' beta)`.
pub fn check_loss(lp: &CanonicalLP, y: &[f64], beta: &[f64]) -> f64 {
    (0..lp.n)
        .map(|i| {
            let r = y[i] - lp.row(i).iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
            if r >= 0.0 {
                lp.tau * r
            } else {
                (lp.tau - 1.0) * r
            }
        })
        .sum()
}
