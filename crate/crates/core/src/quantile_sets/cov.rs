use nalgebra::{Matrix2, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Negative eigenvalues above this are clipped to zero.
pub const PSD_CLIP: f64 = -1e-8;

/// A symmetric positive semidefinite 2x2 covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cov2 {
    entries: [[f64; 2]; 2],
}

impl Cov2 {
    /// Symmetrizes, then clips eigenvalues in `[PSD_CLIP, 0)` to zero.
    pub fn new(var_lower: f64, cov: f64, var_upper: f64) -> Result<Self> {
        Self::from_matrix([[var_lower, cov], [cov, var_upper]])
    }

    pub fn from_matrix(m: [[f64; 2]; 2]) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite covariance entry".into()));
        }
        let off = 0.5 * (m[0][1] + m[1][0]);
        let sym = Matrix2::new(m[0][0], off, off, m[1][1]);
        let eig = SymmetricEigen::new(sym);
        let min = eig.eigenvalues.min();
        if min >= 0.0 {
            return Ok(Self {
                entries: [[m[0][0], off], [off, m[1][1]]],
            });
        }
        if min < PSD_CLIP {
            return Err(Error::NotPsd { min_eigen: min });
        }
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        let r = eig.eigenvectors * Matrix2::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        let off = 0.5 * (r[(0, 1)] + r[(1, 0)]);
        Ok(Self {
            entries: [[r[(0, 0)].max(0.0), off], [off, r[(1, 1)].max(0.0)]],
        })
    }

    pub fn zero() -> Self {
        Self {
            entries: [[0.0; 2]; 2],
        }
    }

    pub fn identity() -> Self {
        Self {
            entries: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn entries(&self) -> [[f64; 2]; 2] {
        self.entries
    }

    pub fn var_lower(&self) -> f64 {
        self.entries[0][0]
    }

    pub fn var_upper(&self) -> f64 {
        self.entries[1][1]
    }

    pub fn cov(&self) -> f64 {
        self.entries[0][1]
    }

    /// Implied correlation, `None` if a variance is zero.
    pub fn correlation(&self) -> Option<f64> {
        let d = (self.var_lower() * self.var_upper()).sqrt();
        (d > 0.0).then(|| self.cov() / d)
    }

    /// A factor `L` with `L L' = self`.
    pub fn factor(&self) -> [[f64; 2]; 2] {
        let m = Matrix2::new(
            self.entries[0][0],
            self.entries[0][1],
            self.entries[1][0],
            self.entries[1][1],
        );
        let eig = SymmetricEigen::new(m);
        let l = eig.eigenvectors * Matrix2::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
        [[l[(0, 0)], l[(0, 1)]], [l[(1, 0)], l[(1, 1)]]]
    }

    /// One draw from `N(0, self)`.
    pub fn sample<R: Rng + ?Sized>(factor: &[[f64; 2]; 2], rng: &mut R) -> (f64, f64) {
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        (
            factor[0][0] * e1 + factor[0][1] * e2,
            factor[1][0] * e1 + factor[1][1] * e2,
        )
    }
}
