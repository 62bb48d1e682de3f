//! Interval observations, datasets, CSV ingestion and the seeded RNG contract.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One outcome interval `[lower, upper]`. Either endpoint may be infinite
/// (censoring), but the interval is never empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalObs {
    lower: f64,
    upper: f64,
}

impl IntervalObs {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        Self::checked(lower, upper, 0)
    }

    fn checked(lower: f64, upper: f64, row: usize) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() {
            return Err(Error::InvalidInterval {
                row,
                reason: "NaN endpoint".into(),
            });
        }
        if lower > upper {
            return Err(Error::Inverted { row, lower, upper });
        }
        if lower == upper && lower.is_infinite() {
            return Err(Error::InvalidInterval {
                row,
                reason: format!("both endpoints equal {lower}"),
            });
        }
        Ok(Self { lower, upper })
    }

    /// Degenerate interval `{y}`.
    pub fn point(y: f64) -> Result<Self> {
        Self::new(y, y)
    }

    #[inline]
    pub fn lower(&self) -> f64 {
        self.lower
    }

    #[inline]
    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn is_finite(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    pub fn is_degenerate(&self) -> bool {
        self.lower == self.upper
    }
}

/// Dense row-major covariate table of shape `n x p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Covariates {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::InvalidArgument(format!(
                    "covariate row {i} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_row_major(rows.len(), cols, values)
    }

    pub fn from_row_major(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "covariate buffer has {} values, expected {}",
                values.len(),
                rows * cols
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite covariate at row {}",
                pos / cols.max(1)
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.cols + k]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, k)).collect()
    }

    /// Indices of columns whose entries are not all equal.
    pub fn nonconstant_columns(&self) -> Vec<usize> {
        (0..self.cols)
            .filter(|&k| {
                let first = self.get(0, k);
                (1..self.rows).any(|i| self.get(i, k) != first)
            })
            .collect()
    }
}

/// `n` interval observations with an optional `n x p` covariate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalDataset {
    intervals: Vec<IntervalObs>,
    covariates: Option<Covariates>,
    has_constant_column: bool,
}

impl IntervalDataset {
    pub fn new(intervals: Vec<IntervalObs>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::Empty("dataset has no observations".into()));
        }
        Ok(Self {
            intervals,
            covariates: None,
            has_constant_column: false,
        })
    }

    pub fn with_covariates(
        intervals: Vec<IntervalObs>,
        covariates: Covariates,
        has_constant_column: bool,
    ) -> Result<Self> {
        let mut ds = Self::new(intervals)?;
        if covariates.nrows() != ds.len() {
            return Err(Error::InvalidArgument(format!(
                "covariate rows {} != observations {}",
                covariates.nrows(),
                ds.len()
            )));
        }
        ds.covariates = Some(covariates);
        ds.has_constant_column = has_constant_column;
        Ok(ds)
    }

    /// Builds a dataset from `(lower, upper)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let intervals = pairs
            .iter()
            .enumerate()
            .map(|(row, &(a, b))| IntervalObs::checked(a, b, row))
            .collect::<Result<Vec<_>>>()?;
        Self::new(intervals)
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn intervals(&self) -> &[IntervalObs] {
        &self.intervals
    }

    pub fn covariates(&self) -> Option<&Covariates> {
        self.covariates.as_ref()
    }

    pub fn has_constant_column(&self) -> bool {
        self.has_constant_column
    }

    pub fn lowers(&self) -> Vec<f64> {
        self.intervals.iter().map(IntervalObs::lower).collect()
    }

    pub fn uppers(&self) -> Vec<f64> {
        self.intervals.iter().map(IntervalObs::upper).collect()
    }

    /// Errors unless every endpoint is finite.
    pub fn require_finite(&self, context: &str) -> Result<()> {
        if self.intervals.iter().all(IntervalObs::is_finite) {
            Ok(())
        } else {
            Err(Error::InfiniteEndpoint(context.to_string()))
        }
    }

    /// Subset of rows, covariates included.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let intervals = rows.iter().map(|&i| self.intervals[i]).collect();
        match &self.covariates {
            None => Self::new(intervals),
            Some(cov) => {
                let mut values = Vec::with_capacity(rows.len() * cov.ncols());
                for &i in rows {
                    values.extend_from_slice(cov.row(i));
                }
                let cov = Covariates::from_row_major(rows.len(), cov.ncols(), values)?;
                Self::with_covariates(intervals, cov, self.has_constant_column)
            }
        }
    }
}

/// True iff every observation is a singleton `{y}`.
pub fn degenerate_check(ds: &IntervalDataset) -> bool {
    ds.intervals().iter().all(IntervalObs::is_degenerate)
}

/// Column names selecting the interval endpoints and covariates in a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub lower: String,
    pub upper: String,
    pub covariates: Vec<String>,
    /// Prepend a column of ones to the covariate table.
    pub add_constant: bool,
    /// Skip malformed rows instead of failing.
    pub skip_malformed: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            lower: "lower".into(),
            upper: "upper".into(),
            covariates: Vec::new(),
            add_constant: false,
            skip_malformed: false,
        }
    }
}

/// Result of [`load_csv`]: the dataset and the number of skipped rows.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: IntervalDataset,
    pub skipped: usize,
}

fn parse_endpoint(raw: &str) -> Option<f64> {
    match raw.trim() {
        "-inf" => Some(f64::NEG_INFINITY),
        "+inf" | "inf" => Some(f64::INFINITY),
        s => s.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

fn parse_finite(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads an interval dataset from a headed CSV file. Rows are 1-based in
/// error messages, counting data rows only.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Loaded> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(BufReader::new(file), schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<Loaded> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let lo_idx = find(&schema.lower)?;
    let up_idx = find(&schema.upper)?;
    let cov_idx = schema
        .covariates
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;

    let mut intervals = Vec::new();
    let mut cov_values = Vec::new();
    let mut skipped = 0;
    for (k, record) in rdr.records().enumerate() {
        let row = k + 1;
        let record = record?;
        let parsed = (|| -> Result<(IntervalObs, Vec<f64>)> {
            let cell = |idx: usize, name: &str| -> Result<&str> {
                record.get(idx).ok_or_else(|| Error::Parse {
                    row,
                    column: name.to_string(),
                    value: String::new(),
                })
            };
            let lo_raw = cell(lo_idx, &schema.lower)?;
            let up_raw = cell(up_idx, &schema.upper)?;
            let lower = parse_endpoint(lo_raw).ok_or_else(|| Error::Parse {
                row,
                column: schema.lower.clone(),
                value: lo_raw.to_string(),
            })?;
            let upper = parse_endpoint(up_raw).ok_or_else(|| Error::Parse {
                row,
                column: schema.upper.clone(),
                value: up_raw.to_string(),
            })?;
            let obs = IntervalObs::checked(lower, upper, row)?;
            let mut xs = Vec::with_capacity(cov_idx.len() + 1);
            if schema.add_constant {
                xs.push(1.0);
            }
            for (&idx, name) in cov_idx.iter().zip(&schema.covariates) {
                let raw = cell(idx, name)?;
                xs.push(parse_finite(raw).ok_or_else(|| Error::Parse {
                    row,
                    column: name.clone(),
                    value: raw.to_string(),
                })?);
            }
            Ok((obs, xs))
        })();
        match parsed {
            Ok((obs, xs)) => {
                intervals.push(obs);
                cov_values.extend(xs);
            }
            Err(_) if schema.skip_malformed => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if intervals.is_empty() {
        return Err(Error::Empty("no data rows".into()));
    }
    let p = cov_idx.len() + usize::from(schema.add_constant);
    let dataset = if p == 0 {
        IntervalDataset::new(intervals)?
    } else {
        let cov = Covariates::from_row_major(intervals.len(), p, cov_values)?;
        IntervalDataset::with_covariates(intervals, cov, schema.add_constant)?
    };
    Ok(Loaded { dataset, skipped })
}

/// Formats a value with 17 significant digits (bit-exact round trip).
pub fn format_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.16e}")
    }
}

/// Writes the dataset with columns `lower,upper[,x1..xp]`. A constant
/// column added at load time is omitted.
pub fn write_csv<W: Write>(ds: &IntervalDataset, mut out: W) -> Result<()> {
    let io = |source| Error::Io {
        path: "<writer>".into(),
        source,
    };
    let skip = usize::from(ds.has_constant_column());
    let p = ds.covariates().map_or(0, |c| c.ncols() - skip);
    let mut header = vec!["lower".to_string(), "upper".to_string()];
    header.extend((1..=p).map(|k| format!("x{k}")));
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for (i, obs) in ds.intervals().iter().enumerate() {
        let mut cells = vec![format_f64(obs.lower()), format_f64(obs.upper())];
        if let Some(cov) = ds.covariates() {
            cells.extend(cov.row(i)[skip..].iter().map(|&v| format_f64(v)));
        }
        writeln!(out, "{}", cells.join(",")).map_err(io)?;
    }
    Ok(())
}

/// Schema matching the layout produced by [`write_csv`].
pub fn written_schema(ds: &IntervalDataset) -> CsvSchema {
    let skip = usize::from(ds.has_constant_column());
    let p = ds.covariates().map_or(0, |c| c.ncols() - skip);
    CsvSchema {
        covariates: (1..=p).map(|k| format!("x{k}")).collect(),
        add_constant: ds.has_constant_column(),
        ..CsvSchema::default()
    }
}

/// Reproducible randomness: a `(seed, stream)` pair names one ChaCha8 stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngState {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Independent child state for sub-task `index` (replication, grid point, ...).
    pub fn derive(&self, index: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0x5851_F42D))),
            stream: index,
        }
    }
}
