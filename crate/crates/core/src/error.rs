use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by estimators, tests and I/O in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("unparseable cell `{value}` in column `{column}` at row {row}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("interval inverted at row {row}: lower {lower} > upper {upper}")]
    Inverted { row: usize, lower: f64, upper: f64 },

    #[error("invalid interval at row {row}: {reason}")]
    InvalidInterval { row: usize, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rank underflow: n*tau = {n_tau} < 1")]
    RankUnderflow { n_tau: f64 },

    #[error("infinite endpoint in {0}")]
    InfiniteEndpoint(String),

    #[error("density degenerate ({value:e}) at {at}: variance undefined")]
    DegenerateDensity { at: String, value: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigen:e})")]
    NotPsd { min_eigen: f64 },

    #[error("non-integer endpoint {value} at row {row}")]
    NonInteger { row: usize, value: f64 },

    #[error("zero empirical mass at estimated quantile {0}")]
    ZeroMass(i64),

    #[error("quantile estimate {0} falls on the integer lattice")]
    LatticeHit(f64),

    #[error("covariates required")]
    NoCovariates,

    #[error("x* outside effective support (density {0:e})")]
    OutsideSupport(f64),

    #[error("local window too sparse: {found} observations, need {needed}")]
    SparseWindow { found: usize, needed: usize },

    #[error("degenerate moment variance: {0}")]
    DegenerateVariance(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("singular basis matrix")]
    SingularBasis,

    #[error("simplex stalled after {iterations} iterations: {reason}")]
    SimplexStall { iterations: usize, reason: String },

    #[error("lattice of {nodes} nodes exceeds the limit {limit}")]
    LatticeTooLarge { nodes: f64, limit: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
