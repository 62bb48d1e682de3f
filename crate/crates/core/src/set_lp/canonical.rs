use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::check_tau;

/// Largest acceptable condition number of the pivot block `X_p`.
pub const MAX_CONDITION: f64 = 1e12;

/// The check-loss LP `min tau 1'u + (1 - tau) 1'v` s.t. `X beta + u - v = y`,
/// `u, v >= 0`, with `beta` eliminated through `p` pivot rows.
///
/// Writing `M = X_{-p} X_p^{-1}`, the remaining constraints are
/// `[-M : I : M : -I] (u_p, u_{-p}, v_p, v_{-p}) = y_{-p} - M y_p` and
/// `beta = X_p^{-1} (y_p - u_p + v_p)`.
///
/// Canonical variable `k < n` is `u_{perm[k]}`, `k >= n` is `v_{perm[k - n]}`;
/// the first `p` entries of `perm` are the pivot rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalLP {
    pub n: usize,
    pub p: usize,
    pub tau: f64,
    /// Row-major `n x p` design.
    x: Vec<f64>,
    pub perm: Vec<usize>,
    /// Inverse of `perm`: `position[i]` is the canonical slot of row `i`.
    position: Vec<usize>,
    /// Row-major `p x p`.
    x_p_inverse: Vec<f64>,
    /// Row-major `(n - p) x p`, `M = X_{-p} X_p^{-1}`.
    m: Vec<f64>,
}

/// Selects `p` rows by Gaussian elimination with partial pivoting.
fn pivot_rows(x: &[f64], n: usize, p: usize) -> Result<Vec<usize>> {
    let mut a = x.to_vec();
    let mut rows: Vec<usize> = (0..n).collect();
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for col in 0..p {
        let (best, val) = (col..n)
            .map(|r| (r, a[rows[r] * p + col].abs()))
            .fold((col, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        if val <= 1e-12 * scale {
            return Err(Error::RankDeficient(format!("column {col} has no usable pivot")));
        }
        rows.swap(col, best);
        let piv = rows[col];
        for &r in &rows[col + 1..] {
            let f = a[r * p + col] / a[piv * p + col];
            if f != 0.0 {
                for c in col..p {
                    a[r * p + c] -= f * a[piv * p + c];
                }
            }
        }
    }
    Ok(rows)
}

pub(crate) fn invert(block: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = block.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 0.0) || smax / smin > MAX_CONDITION {
        return Err(Error::SingularBasis);
    }
    block.try_inverse().ok_or(Error::SingularBasis)
}

impl CanonicalLP {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn position(&self, row: usize) -> usize {
        self.position[row]
    }

    pub fn x_p_inverse(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.p, self.p, &self.x_p_inverse)
    }

    pub fn m(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n - self.p, self.p, &self.m)
    }

    /// Dense `(n - p) x 2n` constraint matrix.
    pub fn a_tilde(&self) -> DMatrix<f64> {
        let (n, p) = (self.n, self.p);
        let mut a = DMatrix::zeros(n - p, 2 * n);
        for r in 0..n - p {
            for c in 0..p {
                let v = self.m[r * p + c];
                a[(r, c)] = -v;
                a[(r, n + c)] = v;
            }
            a[(r, p + r)] = 1.0;
            a[(r, n + p + r)] = -1.0;
        }
        a
    }

    /// `y_{-p} - M y_p`.
    pub fn b_tilde(&self, y: &[f64]) -> Vec<f64> {
        let p = self.p;
        let yp: Vec<f64> = self.perm[..p].iter().map(|&i| y[i]).collect();
        (0..self.n - p)
            .map(|r| {
                let mrow = &self.m[r * p..(r + 1) * p];
                y[self.perm[p + r]] - mrow.iter().zip(&yp).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    pub fn cost(&self) -> Vec<f64> {
        let mut c = vec![self.tau; self.n];
        c.extend(std::iter::repeat_n(1.0 - self.tau, self.n));
        c
    }

    /// `beta = X_p^{-1} (y_p - u_p + v_p)` from a canonical vector.
    pub fn beta_from(&self, y: &[f64], x_tilde: &[f64]) -> Vec<f64> {
        let p = self.p;
        let rhs: Vec<f64> = (0..p)
            .map(|k| y[self.perm[k]] - x_tilde[k] + x_tilde[self.n + k])
            .collect();
        (0..p)
            .map(|r| (0..p).map(|c| self.x_p_inverse[r * p + c] * rhs[c]).sum())
            .collect()
    }

    /// Canonical vector `(u, v)` in permuted layout from natural-order
    /// `u`, `v`.
    pub fn to_canonical_vector(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.n);
        out.extend(self.perm.iter().map(|&i| u[i]));
        out.extend(self.perm.iter().map(|&i| v[i]));
        out
    }

    /// Sanity check of the elimination on a fixed feasible point.
    fn self_check(&self) -> Result<()> {
        let (n, p) = (self.n, self.p);
        let beta: Vec<f64> = (0..p).map(|k| 0.5 - 0.3 * k as f64).collect();
        let u: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 / 10.0).collect();
        let v: Vec<f64> = (0..n).map(|i| ((i * 5 + 1) % 13) as f64 / 12.0).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                self.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + u[i] - v[i]
            })
            .collect();
        let xt = self.to_canonical_vector(&u, &v);
        let b = self.b_tilde(&y);
        let scale = 1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs())) * (1.0 + self.m.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        for r in 0..n - p {
            let mrow = &self.m[r * p..(r + 1) * p];
            let mut lhs = xt[p + r] - xt[n + p + r];
            for c in 0..p {
                lhs += mrow[c] * (xt[n + c] - xt[c]);
            }
            if (lhs - b[r]).abs() > 1e-10 * scale {
                return Err(Error::Invariant(format!(
                    "canonical residual {} at row {r}",
                    (lhs - b[r]).abs()
                )));
            }
        }
        let back = self.beta_from(&y, &xt);
        if back.iter().zip(&beta).any(|(a, b)| (a - b).abs() > 1e-10 * scale) {
            return Err(Error::Invariant("beta reconstruction mismatch".into()));
        }
        Ok(())
    }
}

/// Builds the canonical form for design `x` (row-major, `n x p`).
pub fn to_canonical(x: &[f64], n: usize, p: usize, tau: f64) -> Result<CanonicalLP> {
    check_tau(tau)?;
    if p == 0 || n <= p || x.len() != n * p {
        return Err(Error::InvalidArgument(format!(
            "need n > p >= 1 and an n x p design (n = {n}, p = {p}, {} values)",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite design entry".into()));
    }
    let perm = pivot_rows(x, n, p)?;
    let xp = DMatrix::from_fn(p, p, |r, c| x[perm[r] * p + c]);
    let inv = invert(xp).map_err(|_| Error::RankDeficient("pivot block ill-conditioned".into()))?;
    let mut m = Vec::with_capacity((n - p) * p);
    for &i in &perm[p..] {
        for c in 0..p {
            m.push((0..p).map(|k| x[i * p + k] * inv[(k, c)]).sum());
        }
    }
    let mut position = vec![0; n];
    for (k, &i) in perm.iter().enumerate() {
        position[i] = k;
    }
    let lp = CanonicalLP {
        n,
        p,
        tau,
        x: x.to_vec(),
        perm,
        position,
        x_p_inverse: inv.transpose().as_slice().to_vec(),
        m,
    };
    lp.self_check()?;
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_only_structure() {
        let lp = to_canonical(&[1.0; 4], 4, 1, 0.5).unwrap();
        assert_eq!(lp.perm[0], 0);
        let a = lp.a_tilde();
        for r in 0..3 {
            assert_eq!(a[(r, 0)], -1.0);
            assert_eq!(a[(r, 4)], 1.0);
            assert_eq!(a[(r, 1 + r)], 1.0);
            assert_eq!(a[(r, 5 + r)], -1.0);
        }
        assert_eq!(lp.b_tilde(&[1.0, 2.0, 3.0, 5.0]), vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn partial_pivoting_picks_large_rows() {
        let x = [1.0, 0.0, 5.0, 1.0, 1.0, 1.0, 2.0, 3.0];
        let lp = to_canonical(&x, 4, 2, 0.3).unwrap();
        assert_eq!(lp.perm[0], 1);
    }

    #[test]
    fn rank_deficient() {
        let x = [1.0, 2.0, 2.0, 4.0, 3.0, 6.0];
        assert!(matches!(to_canonical(&x, 3, 2, 0.5), Err(Error::RankDeficient(_))));
    }
}
