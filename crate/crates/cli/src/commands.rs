use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use intervalq::conditional::{fit_conditional, LocalFit};
use intervalq::data::{load_csv, CsvSchema};
use intervalq::experiments::{run_table, Design, RunOptions};
use intervalq::functionals::FunctionalCurve;
use intervalq::moments::{accepted_runs, confidence_set_scan, MomentConfig, ThetaPoint};
use intervalq::quantile_sets::{
    fit_continuous, quantile_set_discrete, simulate_critical_value, test_fit, test_quantile_set_jittered,
    quantile_set_jittered, TestConfig,
};
use intervalq::set_lp::{brute_force_lattice, enumerate_cells, from_dataset, EnumerateConfig};
use intervalq::{Cov2, Error, IntervalDataset, MetricKind, RngState};
use serde_json::{json, Value};

use crate::config;
use crate::{CqsetArgs, DataArgs, FunctionalsArgs, McArgs, MitestArgs, QsetArgs, SetblpArgs, VariantArg};

#[derive(Debug)]
pub enum CliError {
    Lib(Error),
    Io { path: PathBuf, source: std::io::Error },
    Usage(String),
}

impl CliError {
    /// 3 for I/O failures, 2 for everything else (bad input, violated
    /// invariants).
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Lib(Error::Io { .. }) => 3,
            CliError::Lib(Error::Csv(e)) if e.is_io_error() => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Usage(m) => write!(f, "{m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn load(d: &DataArgs) -> Result<IntervalDataset> {
    let schema = CsvSchema {
        lower: d.lower.clone(),
        upper: d.upper.clone(),
        covariates: d.covariates.clone(),
        add_constant: d.add_constant,
        skip_malformed: d.skip_malformed,
    };
    let loaded = load_csv(&d.data, &schema)?;
    if loaded.skipped > 0 {
        log::warn!("skipped {} malformed rows", loaded.skipped);
    }
    Ok(loaded.dataset)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn print(contents: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(contents.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|source| CliError::Io {
            path: "<stdout>".into(),
            source,
        })
}

fn print_json(v: &Value) -> Result<()> {
    print(&format!("{}\n", serde_json::to_string_pretty(v).expect("values serialize")))
}

fn sigma_json(s: &Cov2) -> Value {
    json!(s.entries())
}

pub fn mc(a: McArgs) -> Result<()> {
    let file = match &a.config {
        Some(p) => config::load(p)?,
        None => config::McConfig::default(),
    };
    let design_name = a
        .design
        .or(file.design)
        .ok_or_else(|| CliError::Usage("--design (or design in --config) is required".into()))?;
    let design = Design::parse(&design_name)?;
    let reps = a.reps.or(file.replications).unwrap_or(if a.full_scale {
        design.full_replications()
    } else {
        design.desk_replications()
    });
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let out = a
        .out
        .or(file.output_dir)
        .ok_or_else(|| CliError::Usage("--out (or output_dir in --config) is required".into()))?;
    std::fs::create_dir_all(&out).map_err(|source| CliError::Io {
        path: out.clone(),
        source,
    })?;
    let mut opts = RunOptions::new(design, reps, seed);
    if let Some(d) = a.draws {
        opts.draws = d;
    }
    if let Some(b) = a.bootstrap {
        opts.bootstrap = b;
    }
    let start = Instant::now();
    let report = run_table(design, &opts)?;
    let secs = start.elapsed().as_secs_f64();
    let name = design.name();
    write_file(&out.join(format!("{name}.csv")), &report.to_table_csv())?;
    write_file(&out.join(format!("{name}.json")), &report.to_json()?)?;
    if design == Design::Figure1 {
        write_file(&out.join("figure1_plot.csv"), &report.plot_csv())?;
    }
    let timing = json!({ "design": name, "replications": reps, "seed": seed, "wall_time_seconds": secs });
    write_file(&out.join("timing.json"), &format!("{timing:#}\n"))?;
    print(&report.to_table_csv())?;
    if report.discard_rate > 0.0 {
        log::warn!("discard rate {:.4}", report.discard_rate);
    }
    Ok(())
}

pub fn qset(a: QsetArgs) -> Result<()> {
    let ds = load(&a.data)?;
    let metric = MetricKind::parse(&a.metric)?;
    let cfg = TestConfig {
        alpha: a.alpha,
        metric,
        draws: a.draws,
    };
    let hypo = a.hypo_lower.zip(a.hypo_upper);
    let rng = RngState::new(a.seed, 0);
    let (estimate, sigma, outcome) = match a.variant {
        VariantArg::Cont => {
            let fit = fit_continuous(&ds, a.tau)?;
            let outcome = hypo
                .map(|h| test_fit(&fit, ds.len(), &h, &cfg, rng))
                .transpose()?;
            (fit.estimate, Some(fit.sigma), outcome)
        }
        VariantArg::Jitter => match hypo {
            Some(h) => {
                let (fit, o) = test_quantile_set_jittered(&ds, a.tau, &h, &cfg, rng)?;
                (fit.estimate, Some(fit.sigma), Some(o))
            }
            None => {
                let fit = quantile_set_jittered(&ds, a.tau, rng.derive(0))?;
                (fit.estimate, Some(fit.sigma), None)
            }
        },
        VariantArg::Disc => {
            if hypo.is_some() {
                log::warn!("the discrete estimator is super-consistent; no test is run");
            }
            (quantile_set_discrete(&ds, a.tau)?, None, None)
        }
    };
    let critical = match (&outcome, &sigma) {
        (Some(o), _) => Some(o.critical_value),
        (None, Some(s)) => Some(simulate_critical_value(s, metric, a.alpha, a.draws, rng.derive(1))?),
        _ => None,
    };
    print_json(&json!({
        "tau": estimate.tau,
        "lower": estimate.lower,
        "upper": estimate.upper,
        "variant": estimate.variant,
        "sigma": sigma.as_ref().map(sigma_json),
        "statistic": outcome.map(|o| o.statistic),
        "critical_value": critical,
        "reject": outcome.map(|o| o.reject),
        "metric": metric,
        "alpha": a.alpha,
        "n": ds.len(),
    }))
}

/// Points from the `--xstar` argument given the number of conditioning
/// covariates.
fn parse_points(spec: &str, dim: usize) -> Result<Vec<Vec<f64>>> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| CliError::Usage(format!("bad number `{s}` in --xstar")))
    };
    if spec.contains(';') {
        spec.split(';')
            .map(|p| p.split(',').map(num).collect())
            .collect()
    } else if dim == 1 {
        spec.split(',').map(|s| num(s).map(|v| vec![v])).collect()
    } else {
        Ok(vec![spec.split(',').map(num).collect::<Result<_>>()?])
    }
}

fn local_json(fit: &LocalFit, crit: f64) -> Value {
    json!({
        "x_star": fit.x_star,
        "tau": fit.tau,
        "lower": fit.estimate.lower,
        "upper": fit.estimate.upper,
        "bandwidths": fit.bandwidths,
        "local_n": fit.local_n,
        "sigma": sigma_json(&fit.sigma),
        "critical_value": crit,
    })
}

pub fn cqset(a: CqsetArgs) -> Result<()> {
    let ds = load(&a.data)?;
    let dim = ds
        .covariates()
        .map(|c| c.nonconstant_columns().len())
        .ok_or(CliError::Lib(Error::NoCovariates))?;
    let points = parse_points(&a.xstar, dim)?;
    let mut out = Vec::new();
    let mut failed = 0;
    for (k, x) in points.iter().enumerate() {
        let res = fit_conditional(&ds, a.tau, x, a.gamma).and_then(|fit| {
            let crit = simulate_critical_value(
                &fit.sigma,
                MetricKind::Hausdorff,
                a.alpha,
                a.draws,
                RngState::new(a.seed, k as u64),
            )?;
            Ok(local_json(&fit, crit))
        });
        out.push(match res {
            Ok(v) => v,
            Err(e) => {
                failed += 1;
                json!({ "x_star": x, "tau": a.tau, "error": e.to_string() })
            }
        });
    }
    print_json(&Value::Array(out))?;
    if failed > 0 {
        return Err(CliError::Usage(format!("{failed} of {} points failed", points.len())));
    }
    Ok(())
}

fn read_grid(path: &Path) -> Result<(Vec<String>, Vec<ThetaPoint>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Lib(Error::Csv(e)))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Lib(Error::Csv(e)))?
        .iter()
        .map(String::from)
        .collect();
    let mut grid = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Lib(Error::Csv(e)))?;
        let theta = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| CliError::Usage(format!("grid row {}: not numeric", i + 1)))?;
        grid.push(ThetaPoint(theta));
    }
    Ok((header, grid))
}

pub fn mitest(a: MitestArgs) -> Result<()> {
    let ds = load(&a.data)?;
    let (header, grid) = read_grid(&a.grid_file)?;
    let cfg = MomentConfig {
        r: a.r,
        bootstrap: a.bootstrap,
        alpha: a.alpha,
        ..MomentConfig::default()
    };
    let scan = confidence_set_scan(&ds, a.tau, &grid, &cfg, RngState::new(a.seed, 0))?;
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut head = header.clone();
    head.extend(["statistic", "critical", "accepted"].map(String::from));
    wtr.write_record(&head).map_err(|e| CliError::Lib(Error::Csv(e)))?;
    for p in &scan {
        let mut row: Vec<String> = p.theta.0.iter().map(|v| v.to_string()).collect();
        row.push(p.statistic.to_string());
        row.push(p.critical_value.to_string());
        row.push(p.accepted.to_string());
        wtr.write_record(&row).map_err(|e| CliError::Lib(Error::Csv(e)))?;
        if let Some(e) = &p.error {
            log::warn!("grid point {:?}: {e}", p.theta.0);
        }
    }
    let bytes = wtr.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    print(&String::from_utf8(bytes).expect("csv output is utf-8"))?;
    let runs = accepted_runs(&scan);
    if runs.len() > 1 {
        log::info!("accepted points form {} runs in grid order", runs.len());
    }
    Ok(())
}

pub fn setblp(a: SetblpArgs) -> Result<()> {
    let ds = load(&a.data)?;
    let (lp, bounds) = from_dataset(&ds, a.tau)?;
    if let Some(m) = a.lattice {
        let betas = brute_force_lattice(&lp, &bounds, m)?;
        return print_json(&json!({ "mode": "lattice", "points_per_interval": m, "betas": betas }));
    }
    let cfg = EnumerateConfig {
        probe_budget: a.probe_budget,
        cell_cap: a.cell_cap,
        ..EnumerateConfig::default()
    };
    let est = enumerate_cells(&lp, &bounds, &cfg, RngState::new(a.seed, 0))?;
    let cells: Vec<Value> = est
        .cells
        .iter()
        .map(|c| {
            json!({
                "id": c.id,
                "basis_indices": c.basis_indices(&lp),
                "interpolated_rows": c.basis.h,
                "signs": c.basis.signs,
                "beta_map": c.xh_inverse,
                "region": c.region_rows(),
                "witness": c.witness,
            })
        })
        .collect();
    let doc = json!({
        "tau": a.tau,
        "n": lp.n,
        "p": lp.p,
        "status": est.status,
        "coverage": est.coverage_report,
        "probes": est.probes,
        "connectedness": est.connectedness,
        "cells": cells,
    });
    match &a.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
                path: dir.clone(),
                source,
            })?;
            write_file(&dir.join("cells.json"), &format!("{doc:#}\n"))?;
            let mut csv = String::from("cell");
            for k in 0..lp.p {
                csv.push_str(&format!(",beta{k}"));
            }
            csv.push('\n');
            for (b, id) in &est.beta_samples {
                csv.push_str(&id.to_string());
                for v in b {
                    csv.push_str(&format!(",{v}"));
                }
                csv.push('\n');
            }
            write_file(&dir.join("beta_samples.csv"), &csv)
        }
        None => print_json(&doc),
    }
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || CliError::Usage(format!("bad --grid `{spec}`"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if count < 2 || !(stop > start) {
            return Err(bad());
        }
        return Ok((0..count)
            .map(|k| start + (stop - start) * k as f64 / (count - 1) as f64)
            .collect());
    }
    let mut g: Vec<f64> = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    g.sort_by(f64::total_cmp);
    Ok(g)
}

pub fn functionals(a: FunctionalsArgs) -> Result<()> {
    let ds = load(&a.data)?;
    let grid = parse_grid(&a.grid)?;
    print(&FunctionalCurve::evaluate(&ds, &grid)?.to_csv())
}
