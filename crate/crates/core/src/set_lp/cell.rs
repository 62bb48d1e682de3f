use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::canonical::{invert, CanonicalLP};
use super::simplex::{beta_of, Basis, Factored};
use crate::error::{Error, Result};

/// Closed interval bounds per observation.
pub type OutcomeBox = [(f64, f64)];

/// One linear inequality `sum coef * y >= 0` in the outcome vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub coef: Vec<(usize, f64)>,
}

impl RegionRow {
    pub fn eval(&self, y: &[f64]) -> f64 {
        self.coef.iter().map(|&(i, c)| c * y[i]).sum()
    }
}

/// An optimal simplex basis, the set of outcome vectors for which it stays
/// optimal, and the affine map from outcomes to coefficients on that set.
///
/// The region is `{y in box : s_i (y_i - x_i' X_h^{-1} y_h) >= 0, i not in h}`
/// and the map is `beta(y) = X_h^{-1} y_h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasisCell {
    pub id: usize,
    pub basis: Basis,
    /// Row-major `p x p`.
    pub xh_inverse: Vec<f64>,
    /// Row-major `n x p`, `x_i' X_h^{-1}`.
    #[serde(skip)]
    z: Vec<f64>,
    pub witness: Vec<f64>,
}

impl BasisCell {
    pub fn new(lp: &CanonicalLP, id: usize, basis: Basis, witness: Vec<f64>) -> Result<Self> {
        let f = Factored::new(lp, basis)?;
        Ok(Self {
            id,
            basis: f.basis,
            xh_inverse: f.xh_inv,
            z: f.z,
            witness,
        })
    }

    pub fn beta(&self, y: &[f64]) -> Vec<f64> {
        beta_of(&self.xh_inverse, &self.basis.h, y)
    }

    /// Smallest signed residual `s_i r_i` over rows outside `h`, stopping
    /// early once it drops below `-tol`.
    fn min_slack(&self, y: &[f64], tol: f64) -> f64 {
        let p = self.basis.h.len();
        let yh: Vec<f64> = self.basis.h.iter().map(|&i| y[i]).collect();
        let mut worst = f64::INFINITY;
        for (i, &s) in self.basis.signs.iter().enumerate() {
            if s == 0 {
                continue;
            }
            let zi = &self.z[i * p..(i + 1) * p];
            let fit: f64 = zi.iter().zip(&yh).map(|(a, b)| a * b).sum();
            let v = s as f64 * (y[i] - fit);
            if v < worst {
                worst = v;
                if v < -tol {
                    break;
                }
            }
        }
        worst
    }

    /// Whether `y` (assumed inside the box) lies in the region.
    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        self.min_slack(y, tol) >= -tol
    }

    /// Canonical indices of the basic variables, ascending.
    pub fn basis_indices(&self, lp: &CanonicalLP) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..lp.n)
            .filter_map(|i| match self.basis.signs[i] {
                1 => Some(lp.position(i)),
                -1 => Some(lp.n + lp.position(i)),
                _ => None,
            })
            .collect();
        idx.sort_unstable();
        idx
    }

    /// Dense `A~_B^{-1}`, columns of `A~` taken in ascending basis order.
    pub fn basis_inverse(&self, lp: &CanonicalLP) -> Result<DMatrix<f64>> {
        let a = lp.a_tilde();
        let idx = self.basis_indices(lp);
        let b = DMatrix::from_fn(lp.n - lp.p, idx.len(), |r, c| a[(r, idx[c])]);
        invert(b)
    }

    /// Reduced costs `c_N - c_B A~_B^{-1} A~_N` for all nonbasic canonical
    /// variables, evaluated densely.
    pub fn reduced_costs_dense(&self, lp: &CanonicalLP) -> Result<Vec<(usize, f64)>> {
        let a = lp.a_tilde();
        let cost = lp.cost();
        let idx = self.basis_indices(lp);
        let binv = self.basis_inverse(lp)?;
        let cb = DMatrix::from_fn(1, idx.len(), |_, c| cost[idx[c]]);
        let duals = cb * binv;
        let mut out = Vec::new();
        for k in 0..2 * lp.n {
            if idx.binary_search(&k).is_ok() {
                continue;
            }
            let col = a.column(k);
            out.push((k, cost[k] - (duals.clone() * col)[(0, 0)]));
        }
        Ok(out)
    }

    /// Region inequalities in `y` (box constraints not included).
    pub fn region_rows(&self) -> Vec<RegionRow> {
        let p = self.basis.h.len();
        self.basis
            .signs
            .iter()
            .enumerate()
            .filter(|(_, &s)| s != 0)
            .map(|(i, &s)| {
                let s = s as f64;
                let mut coef = vec![(i, s)];
                for (c, &j) in self.basis.h.iter().enumerate() {
                    coef.push((j, -s * self.z[i * p + c]));
                }
                RegionRow { coef }
            })
            .collect()
    }

    /// Whether `beta` is `beta(y)` for some `y` in the region: `X_h beta`
    /// must lie in the box on `h`, and every other `y_i` can be chosen on
    /// the correct side of `x_i' beta`.
    pub fn image_contains(&self, lp: &CanonicalLP, bounds: &OutcomeBox, beta: &[f64], tol: f64) -> bool {
        (0..lp.n).all(|i| {
            let fit: f64 = lp.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
            let (lo, hi) = bounds[i];
            match self.basis.signs[i] {
                0 => fit >= lo - tol && fit <= hi + tol,
                1 => hi >= fit - tol,
                _ => lo <= fit + tol,
            }
        })
    }

    /// Half-spaces `a' beta <= b` describing the image of the region.
    fn image_halfspaces(&self, lp: &CanonicalLP, bounds: &OutcomeBox) -> Vec<(Vec<f64>, f64)> {
        let mut out = Vec::new();
        for i in 0..lp.n {
            let x = lp.row(i).to_vec();
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            let (lo, hi) = bounds[i];
            match self.basis.signs[i] {
                0 => {
                    out.push((x, hi));
                    out.push((neg, -lo));
                }
                1 => out.push((x, hi)),
                _ => out.push((neg, -lo)),
            }
        }
        out
    }

    /// Vertices of the image polytope for `p <= 3` by brute force over
    /// `p`-subsets of its defining half-spaces.
    pub fn image_vertices(&self, lp: &CanonicalLP, bounds: &OutcomeBox) -> Result<Vec<Vec<f64>>> {
        const MAX_HALFSPACES: usize = 400;
        let p = lp.p;
        if p > 3 {
            return Err(Error::InvalidArgument("vertex enumeration offered for p <= 3".into()));
        }
        let hs = self.image_halfspaces(lp, bounds);
        if hs.len() > MAX_HALFSPACES {
            return Err(Error::LatticeTooLarge {
                nodes: hs.len() as f64,
                limit: MAX_HALFSPACES,
            });
        }
        let mut verts: Vec<Vec<f64>> = Vec::new();
        let mut subset: Vec<usize> = (0..p).collect();
        loop {
            let a = DMatrix::from_fn(p, p, |r, c| hs[subset[r]].0[c]);
            if let Some(inv) = a.clone().try_inverse() {
                if a.determinant().abs() > 1e-12 {
                    let b = nalgebra::DVector::from_fn(p, |r, _| hs[subset[r]].1);
                    let v = inv * b;
                    let feasible = hs.iter().all(|(row, rhs)| {
                        row.iter().zip(v.iter()).map(|(x, y)| x * y).sum::<f64>() <= rhs + 1e-9
                    });
                    let v: Vec<f64> = v.iter().copied().collect();
                    if feasible
                        && !verts
                            .iter()
                            .any(|w| w.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-9))
                    {
                        verts.push(v);
                    }
                }
            }
            // next p-combination of 0..hs.len()
            let mut k = p;
            loop {
                if k == 0 {
                    return Ok(verts);
                }
                k -= 1;
                if subset[k] < hs.len() - p + k {
                    subset[k] += 1;
                    for m in k + 1..p {
                        subset[m] = subset[m - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
}
