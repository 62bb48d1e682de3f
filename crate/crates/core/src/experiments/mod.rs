//! Simulation designs and the Monte Carlo runner.

pub mod dgp;
pub mod runner;

pub use dgp::{generate, local_alternative, DgpKind, DgpSpec};
pub use runner::{preflight, run_table, Design, DesignGrid, ExperimentReport, ReportCell, RunOptions};
