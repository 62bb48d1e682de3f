//! Monte Carlo harness for the rejection and event-frequency tables.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{
    conditional_quantile_set, continuous_quantile_set, discrete_quantile_set, generate, local_alternative,
    parametric_truth, DgpKind, DgpSpec, TABLE1, TABLE3,
};
use crate::conditional::fit_conditional;
use crate::data::{IntervalDataset, RngState};
use crate::error::{Error, Result};
use crate::moments::{confidence_set_scan, MomentConfig, ThetaPoint};
use crate::quantile_sets::{
    fit_continuous, hausdorff, quantile_set_discrete, simulate_critical_value, MetricKind, TestConfig,
};

/// Smallest accepted replication count.
pub const MIN_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    Table2,
    Table5,
    Table6,
    Figure1,
}

impl Design {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "table2" => Ok(Self::Table2),
            "table5" => Ok(Self::Table5),
            "table6" => Ok(Self::Table6),
            "figure1" => Ok(Self::Figure1),
            other => Err(Error::InvalidArgument(format!("unknown design `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Table2 => "table2",
            Self::Table5 => "table5",
            Self::Table6 => "table6",
            Self::Figure1 => "figure1",
        }
    }

    /// Desk-scale replication count.
    pub fn desk_replications(self) -> usize {
        match self {
            Self::Table2 | Self::Table5 => 2_000,
            Self::Table6 => 1_000,
            Self::Figure1 => 200,
        }
    }

    /// Published replication count.
    pub fn full_replications(self) -> usize {
        match self {
            Self::Figure1 => 1_000,
            _ => 25_000,
        }
    }
}

/// The cells to run. Defaults are the published designs; any list may be narrowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignGrid {
    pub taus: Vec<f64>,
    pub ns: Vec<usize>,
    /// Local-alternative shifts (tables 2 and 6).
    pub deltas: Vec<f64>,
    /// Covariate points (table 6).
    pub x_stars: Vec<f64>,
    /// Values of the slope on the scanned slice (figure 1).
    pub theta2: Vec<f64>,
}

impl DesignGrid {
    pub fn standard(design: Design) -> Self {
        let taus = vec![0.25, 0.5, 0.75];
        match design {
            Design::Table2 => Self {
                taus,
                ns: vec![250, 500, 1_000, 2_000],
                deltas: vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0],
                x_stars: vec![],
                theta2: vec![],
            },
            Design::Table5 => Self {
                taus,
                ns: vec![250, 500, 1_000, 2_000],
                deltas: vec![],
                x_stars: vec![],
                theta2: vec![],
            },
            Design::Table6 => Self {
                taus,
                ns: vec![1_000, 2_000, 4_000],
                deltas: vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
                x_stars: vec![-1.0, 0.0, 1.0],
                theta2: vec![],
            },
            Design::Figure1 => Self {
                taus,
                ns: vec![100, 200],
                deltas: vec![],
                x_stars: vec![],
                theta2: (0..=20).map(|k| -0.5 + 0.1 * k as f64).collect(),
            },
        }
    }
}

/// Run settings beyond design and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub replications: usize,
    pub seed: u64,
    pub grid: DesignGrid,
    pub alpha: f64,
    /// Simulated draws per critical value (tables 2 and 6).
    pub draws: usize,
    /// Bootstrap draws per grid point (figure 1).
    pub bootstrap: usize,
    /// Hoelder exponent in the conditional bandwidth rule.
    pub gamma: f64,
}

impl RunOptions {
    pub fn new(design: Design, replications: usize, seed: u64) -> Self {
        Self {
            replications,
            seed,
            grid: DesignGrid::standard(design),
            alpha: 0.05,
            draws: crate::quantile_sets::DEFAULT_DRAWS,
            bootstrap: 200,
            gamma: 1.0,
        }
    }
}

/// One reported frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub tau: f64,
    pub n: usize,
    pub x_star: Option<f64>,
    pub delta: Option<f64>,
    pub theta: Option<Vec<f64>>,
    /// Rejections (or events) among valid replications.
    pub hits: usize,
    pub valid: usize,
    pub discarded: usize,
    pub frequency: f64,
}

/// One pre-flight comparison of a population set with a reference table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreflightRow {
    pub table: String,
    pub tau: f64,
    pub reference: (f64, f64),
    pub computed: (f64, f64),
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preflight {
    pub tolerance: f64,
    pub rows: Vec<PreflightRow>,
}

impl Preflight {
    /// Table 1 rows must agree; Table 3 mismatches are reported only.
    pub fn table1_ok(&self) -> bool {
        self.rows.iter().filter(|r| r.table == "table1").all(|r| r.within_tolerance)
    }

    pub fn table3_mismatches(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.table == "table3" && !r.within_tolerance)
            .count()
    }
}

/// Closed-form population sets compared with Tables 1 and 3.
pub fn preflight() -> Preflight {
    const TOL: f64 = 0.01;
    let mut rows = Vec::new();
    let mut push = |table: &str, tau: f64, reference: (f64, f64), computed: (f64, f64)| {
        rows.push(PreflightRow {
            table: table.into(),
            tau,
            reference,
            computed,
            within_tolerance: (reference.0 - computed.0).abs() <= TOL && (reference.1 - computed.1).abs() <= TOL,
        });
    };
    for (tau, a, b) in TABLE1 {
        push("table1", tau, (a, b), continuous_quantile_set(tau));
    }
    for (tau, a, b) in TABLE3 {
        push("table3", tau, (a, b), discrete_quantile_set(tau));
    }
    Preflight { tolerance: TOL, rows }
}

/// Aggregated frequencies. Serialization is byte-stable for a fixed
/// design, options and seed; timing is kept out of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub design: Design,
    pub replications: usize,
    pub seed: u64,
    pub options: RunOptions,
    pub preflight: Preflight,
    pub cells: Vec<ReportCell>,
    /// Discarded replication-cells over attempted ones.
    pub discard_rate: f64,
    /// Distinct error messages with counts.
    pub errors: Vec<(String, usize)>,
}

/// Outcome of one replication for one block of cells sharing a sample.
type RepOutcome = std::result::Result<Vec<bool>, String>;

struct Block {
    tau: f64,
    n: usize,
    x_star: Option<f64>,
    /// One entry per reported cell in this block.
    cells: Vec<(Option<f64>, Option<Vec<f64>>)>,
}

fn blocks(design: Design, g: &DesignGrid) -> Vec<Block> {
    let mut out = Vec::new();
    let xs: Vec<Option<f64>> = if design == Design::Table6 {
        g.x_stars.iter().map(|&x| Some(x)).collect()
    } else {
        vec![None]
    };
    for &x_star in &xs {
        for &tau in &g.taus {
            for &n in &g.ns {
                let cells = match design {
                    Design::Table2 | Design::Table6 => g.deltas.iter().map(|&d| (Some(d), None)).collect(),
                    Design::Table5 => vec![(None, None)],
                    Design::Figure1 => g
                        .theta2
                        .iter()
                        .map(|&t2| (None, Some(vec![parametric_truth(tau)[0], t2])))
                        .collect(),
                };
                out.push(Block { tau, n, x_star, cells });
            }
        }
    }
    out
}

fn replicate(design: Design, opts: &RunOptions, block: &Block, rng: RngState) -> Result<Vec<bool>> {
    let (tau, n) = (block.tau, block.n);
    let kind = match design {
        Design::Table2 => DgpKind::Continuous,
        Design::Table5 => DgpKind::Discrete,
        Design::Table6 => DgpKind::Conditional,
        Design::Figure1 => DgpKind::Parametric,
    };
    let ds: IntervalDataset = generate(DgpSpec { kind, n }, rng.derive(0))?;
    let cfg = TestConfig {
        alpha: opts.alpha,
        metric: MetricKind::Hausdorff,
        draws: opts.draws,
    };
    match design {
        Design::Table2 => {
            let fit = fit_continuous(&ds, tau)?;
            let crit = simulate_critical_value(&fit.sigma, cfg.metric, cfg.alpha, cfg.draws, rng.derive(1))?;
            let theta0 = continuous_quantile_set(tau);
            block
                .cells
                .iter()
                .map(|(delta, _)| {
                    let h = local_alternative(theta0, delta.unwrap_or(0.0), n);
                    let d = hausdorff(&fit.estimate, &h)?;
                    Ok((n as f64).sqrt() * d > crit)
                })
                .collect()
        }
        Design::Table5 => {
            let est = quantile_set_discrete(&ds, tau)?;
            Ok(vec![hausdorff(&est, &discrete_quantile_set(tau))? > 0.0])
        }
        Design::Table6 => {
            let x = block.x_star.unwrap_or(0.0);
            let fit = fit_conditional(&ds, tau, &[x], opts.gamma)?;
            let crit = simulate_critical_value(&fit.sigma, cfg.metric, cfg.alpha, cfg.draws, rng.derive(1))?;
            let theta0 = conditional_quantile_set(tau, x);
            let rn = (fit.local_n as f64).sqrt();
            block
                .cells
                .iter()
                .map(|(delta, _)| {
                    let h = local_alternative(theta0, delta.unwrap_or(0.0), n);
                    Ok(rn * hausdorff(&fit.estimate, &h)? > crit)
                })
                .collect()
        }
        Design::Figure1 => {
            let mcfg = MomentConfig {
                bootstrap: opts.bootstrap,
                alpha: opts.alpha,
                ..MomentConfig::default()
            };
            let grid: Vec<ThetaPoint> = block
                .cells
                .iter()
                .map(|(_, t)| ThetaPoint(t.clone().expect("figure1 cells carry theta")))
                .collect();
            confidence_set_scan(&ds, tau, &grid, &mcfg, rng.derive(1))?
                .into_iter()
                .map(|p| match p.error {
                    Some(e) => Err(Error::Invariant(e)),
                    None => Ok(!p.accepted),
                })
                .collect()
        }
    }
}

/// Runs every cell of `design`. Replication `r` of block `b` draws from
/// `RngState::new(seed, b).derive(r)`.
pub fn run_table(design: Design, opts: &RunOptions) -> Result<ExperimentReport> {
    if opts.replications < MIN_REPLICATIONS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_REPLICATIONS} replications, got {}",
            opts.replications
        )));
    }
    let pre = preflight();
    if !pre.table1_ok() {
        return Err(Error::Invariant("population sets disagree with Table 1".into()));
    }
    if pre.table3_mismatches() > 0 {
        log::warn!("{} Table 3 rows differ from the binned-normal population", pre.table3_mismatches());
    }
    let mut cells = Vec::new();
    let mut errors: std::collections::BTreeMap<String, usize> = Default::default();
    let mut attempted = 0usize;
    let mut discarded_total = 0usize;
    for (b, block) in blocks(design, &opts.grid).iter().enumerate() {
        let base = RngState::new(opts.seed, b as u64);
        let outcomes: Vec<RepOutcome> = (0..opts.replications)
            .into_par_iter()
            .map(|r| replicate(design, opts, block, base.derive(r as u64)).map_err(|e| e.to_string()))
            .collect();
        let mut hits = vec![0usize; block.cells.len()];
        let mut valid = 0;
        for o in &outcomes {
            match o {
                Ok(v) => {
                    valid += 1;
                    for (h, &x) in hits.iter_mut().zip(v) {
                        *h += x as usize;
                    }
                }
                Err(e) => *errors.entry(e.clone()).or_default() += 1,
            }
        }
        let discarded = opts.replications - valid;
        attempted += opts.replications;
        discarded_total += discarded;
        for ((delta, theta), h) in block.cells.iter().zip(hits) {
            cells.push(ReportCell {
                tau: block.tau,
                n: block.n,
                x_star: block.x_star,
                delta: *delta,
                theta: theta.clone(),
                hits: h,
                valid,
                discarded,
                frequency: if valid == 0 { f64::NAN } else { h as f64 / valid as f64 },
            });
        }
    }
    Ok(ExperimentReport {
        design,
        replications: opts.replications,
        seed: opts.seed,
        options: opts.clone(),
        preflight: pre,
        cells,
        discard_rate: discarded_total as f64 / attempted.max(1) as f64,
        errors: errors.into_iter().collect(),
    })
}

/// Shortest round-trip decimal.
fn fmtnum(v: f64) -> String {
    format!("{v}")
}

fn fmt3(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:.3}")
    }
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Invariant(e.to_string()))
    }

    /// Frequencies laid out like the published table: one row per
    /// `(x*, tau, n)` and one column per `delta` (tables 2, 6), a single
    /// frequency column (table 5), or one row per slice point (figure 1).
    pub fn to_table_csv(&self) -> String {
        let mut out = String::new();
        match self.design {
            Design::Table2 | Design::Table6 => {
                let deltas = &self.options.grid.deltas;
                if self.design == Design::Table6 {
                    out.push_str("x_star,");
                }
                out.push_str("tau,n");
                for d in deltas {
                    let _ = write!(out, ",delta_{}", fmtnum(*d));
                }
                out.push('\n');
                for row in self.cells.chunks(deltas.len().max(1)) {
                    let c = &row[0];
                    if let Some(x) = c.x_star {
                        let _ = write!(out, "{},", fmtnum(x));
                    }
                    let _ = write!(out, "{},{}", fmtnum(c.tau), c.n);
                    for c in row {
                        let _ = write!(out, ",{}", fmt3(c.frequency));
                    }
                    out.push('\n');
                }
            }
            Design::Table5 => {
                out.push_str("tau,n,frequency\n");
                for c in &self.cells {
                    let _ = writeln!(out, "{},{},{}", fmtnum(c.tau), c.n, fmt3(c.frequency));
                }
            }
            Design::Figure1 => out.push_str(&self.plot_csv()),
        }
        out
    }

    /// Long-format rejection curves for plotting (figure 1): `tau, n,
    /// theta1, theta2, rejection`.
    pub fn plot_csv(&self) -> String {
        let mut out = String::from("tau,n,theta1,theta2,rejection,valid\n");
        for c in &self.cells {
            if let Some(t) = &c.theta {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    fmtnum(c.tau),
                    c.n,
                    fmtnum(t[0]),
                    fmtnum(t[1]),
                    fmt3(c.frequency),
                    c.valid
                );
            }
        }
        out
    }

    /// Cell matching the given coordinates.
    pub fn cell(&self, tau: f64, n: usize, x_star: Option<f64>, delta: Option<f64>) -> Option<&ReportCell> {
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() < 1e-12,
            (None, None) => true,
            _ => false,
        };
        self.cells
            .iter()
            .find(|c| (c.tau - tau).abs() < 1e-12 && c.n == n && close(c.x_star, x_star) && close(c.delta, delta))
    }
}
