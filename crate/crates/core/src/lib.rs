//! Partial identification of quantiles and quantile-regression parameters
//! from interval-valued outcomes.
//!
//! * [`data`]: interval observations, datasets, CSV I/O and seeded RNG streams.
//! * [`functionals`]: empirical containment and capacity functionals.
//! * [`quantile_sets`]: quantile-set estimators, covariance and Hausdorff tests.
//! * [`conditional`]: local quantile sets at a covariate point.
//! * [`moments`]: moment-inequality tests for linear quantile regression.
//! * [`set_lp`]: basis-region enumeration for the set of best linear predictors.

pub mod conditional;
pub mod data;
pub mod error;
pub mod experiments;
pub mod functionals;
pub mod moments;
pub mod quantile_sets;
pub mod set_lp;
pub mod stats;

pub use data::{IntervalDataset, IntervalObs, RngState};
pub use error::{Error, Result};
pub use quantile_sets::{Cov2, MetricKind, QuantileSetEstimate, TestOutcome};
