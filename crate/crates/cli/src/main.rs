use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

/// Quantile sets, conditional quantile sets, moment-inequality tests and
/// best-linear-predictor sets for interval-valued outcomes.
#[derive(Debug, Parser)]
#[command(name = "intervalq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte Carlo design (table2, table5, table6, figure1).
    Mc(McArgs),
    /// Estimate and test an unconditional quantile set.
    Qset(QsetArgs),
    /// Local quantile sets at covariate points.
    Cqset(CqsetArgs),
    /// Moment-inequality test over a grid of coefficient vectors.
    Mitest(MitestArgs),
    /// Basis cells and coefficient samples of the best-linear-predictor set.
    Setblp(SetblpArgs),
    /// Empirical containment and capacity functionals on a grid.
    Functionals(FunctionalsArgs),
}

/// Input file and column selection shared by the data subcommands.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "lower")]
    pub lower: String,
    #[arg(long, default_value = "upper")]
    pub upper: String,
    /// Comma-separated covariate column names.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Prepend a column of ones to the covariates.
    #[arg(long)]
    pub add_constant: bool,
    /// Skip malformed rows instead of failing.
    #[arg(long)]
    pub skip_malformed: bool,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long)]
    pub design: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Key-value file with design, replications, seed, output_dir.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use the published replication counts instead of desk scale.
    #[arg(long)]
    pub full_scale: bool,
    /// Simulated draws per critical value.
    #[arg(long)]
    pub draws: Option<usize>,
    /// Bootstrap draws per grid point (figure1).
    #[arg(long)]
    pub bootstrap: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Cont,
    Disc,
    Jitter,
}

#[derive(Debug, Args)]
pub struct QsetArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub tau: f64,
    #[arg(long, value_enum, default_value = "cont")]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// h, dh or dh2.
    #[arg(long, default_value = "h")]
    pub metric: String,
    #[arg(long, requires = "hypo_upper")]
    pub hypo_lower: Option<f64>,
    #[arg(long, requires = "hypo_lower")]
    pub hypo_upper: Option<f64>,
    #[arg(long, default_value_t = 25_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CqsetArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub tau: f64,
    /// Comma list of points for one conditioning covariate. With several,
    /// coordinates are comma-separated and points `;`-separated.
    #[arg(long, allow_hyphen_values = true)]
    pub xstar: String,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 25_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct MitestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub tau: f64,
    /// CSV with a header and one coefficient vector per row.
    #[arg(long)]
    pub grid_file: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Deepest instrument level.
    #[arg(long = "R", default_value_t = 2)]
    pub r: usize,
    #[arg(long, default_value_t = 1_000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SetblpArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub tau: f64,
    #[arg(long, default_value_t = 200)]
    pub probe_budget: usize,
    #[arg(long, default_value_t = 2_000)]
    pub cell_cap: usize,
    /// Oracle mode: solve on this many lattice points per interval.
    #[arg(long)]
    pub lattice: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for cells.json and beta_samples.csv; JSON goes to stdout
    /// otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FunctionalsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma list of points, or `start:stop:count`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Mc(a) => commands::mc(a),
        Command::Qset(a) => commands::qset(a),
        Command::Cqset(a) => commands::cqset(a),
        Command::Mitest(a) => commands::mitest(a),
        Command::Setblp(a) => commands::setblp(a),
        Command::Functionals(a) => commands::functionals(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
