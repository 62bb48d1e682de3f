//! The set of best linear predictors under the check loss.
//!
//! For a box of outcome vectors `y in prod [y_L_i, y_U_i]`, the check-loss
//! coefficients `beta(y)` form the set estimate. The LP is put in canonical
//! form once; each optimal basis is optimal on a polyhedral region of the
//! box on which `beta(y)` is affine. [`enumerate_cells`] covers the box by
//! such regions, and [`brute_force_lattice`] solves on a grid as an oracle.

mod canonical;
mod cell;
mod enumerate;
mod lattice;
mod lowdisc;
mod simplex;

pub use canonical::{to_canonical, CanonicalLP, MAX_CONDITION};
pub use cell::{BasisCell, OutcomeBox, RegionRow};
pub use enumerate::{
    enumerate_cells, ConnectednessReport, EnumerateConfig, EnumerationStatus, SetBLPEstimate,
};
pub use lattice::{brute_force_lattice, MAX_LATTICE_NODES};
pub use lowdisc::Kronecker;
pub use simplex::{
    check_loss, feas_tol, simplex_solve, simplex_solve_from, Basis, SimplexSolution, DUAL_TOL,
    PIVOT_TOL,
};

use crate::data::IntervalDataset;
use crate::error::{Error, Result};

/// Canonical LP and outcome box from a dataset with covariates.
pub fn from_dataset(ds: &IntervalDataset, tau: f64) -> Result<(CanonicalLP, Vec<(f64, f64)>)> {
    let cov = ds.covariates().ok_or(Error::NoCovariates)?;
    ds.require_finite("set_lp")?;
    let (n, p) = (cov.nrows(), cov.ncols());
    let x: Vec<f64> = (0..n).flat_map(|i| cov.row(i).to_vec()).collect();
    let lp = to_canonical(&x, n, p, tau)?;
    let bounds = ds.intervals().iter().map(|o| (o.lower(), o.upper())).collect();
    Ok((lp, bounds))
}
