//! `crossdisp`: cross-sectional dispersion analysis of stock price panels.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical or
//! feasibility error.

mod commands;
mod error;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

use crossdisp_core::io::{parse_date, ReportFormat};
use crossdisp_core::{Date, MissingDataPolicy};

use error::{CliError, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(
    name = "crossdisp",
    version,
    about = "Cross-sectional dispersion of stock performances"
)]
struct Cli {
    /// Worker threads for parallel sections (default: one per core).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dispersion, Hill-exponent and extreme-event series for one reference date.
    Analyze(AnalyzeArgs),
    /// Survival-function step points of one date's cross-section.
    Survival(SurvivalArgs),
    /// Monte Carlo dispersion of equicorrelated Gaussian vectors.
    Simulate(SimulateArgs),
    /// Analyze the same panel against several reference dates.
    Sweep(SweepArgs),
    /// Write a synthetic panel with a planted bubble.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    DropAtRef,
    CompleteCase,
}

impl From<PolicyArg> for MissingDataPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::DropAtRef => MissingDataPolicy::DropAtRef,
            PolicyArg::CompleteCase => MissingDataPolicy::CompleteCase,
        }
    }
}

#[derive(Debug, Args)]
struct PanelOpts {
    /// Price panel CSV (`date,<ticker>,...`).
    panel: PathBuf,

    /// Treatment of stocks with missing prices.
    #[arg(long, value_enum, default_value = "drop-at-ref")]
    policy: PolicyArg,
}

#[derive(Debug, Args)]
struct SeriesOpts {
    /// Fraction of the cross-section used as Hill upper order statistics.
    #[arg(long, default_value_t = 0.10, value_parser = parse_fraction)]
    k_fraction: f64,

    /// Half-width, in trading days, of the local-extreme window.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    window: u64,

    /// Output path: a JSON file, or a directory for CSV output.
    #[arg(long)]
    out: PathBuf,

    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    panel: PanelOpts,

    /// Reference date (YYYY-MM-DD).
    #[arg(long, value_parser = parse_date_arg)]
    tref: Date,

    #[command(flatten)]
    series: SeriesOpts,
}

#[derive(Debug, Args)]
struct SurvivalArgs {
    #[command(flatten)]
    panel: PanelOpts,

    /// Reference date (YYYY-MM-DD).
    #[arg(long, value_parser = parse_date_arg)]
    tref: Date,

    /// Date whose cross-section is exported.
    #[arg(long, value_parser = parse_date_arg)]
    date: Date,

    /// Output CSV with `z,survival` step points.
    #[arg(long)]
    out: PathBuf,

    /// Also write a Hill k-sweep (`k,alpha_hat`) for that cross-section.
    #[arg(long)]
    hill_out: Option<PathBuf>,

    /// Lower threshold for the log-log tail fit (default: cross-sectional median).
    #[arg(long)]
    z_min: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TableArg {
    /// rho in {-1, -0.8, ..., 1} at fixed sigma.
    RhoSweep,
    /// sigma in {0.1, 0.3, ..., 1.9} at fixed rho (default 0.5).
    SigmaSweep,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Vector dimension N.
    #[arg(long, default_value_t = 1000)]
    n: usize,

    /// Monte Carlo replications M.
    #[arg(long, default_value_t = 100)]
    m_reps: usize,

    /// Common correlation (default 0, or 0.5 for the sigma sweep).
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,

    /// Common standard deviation.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,

    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Run a predefined sweep instead of a single configuration.
    #[arg(long, value_enum)]
    table: Option<TableArg>,

    /// Report only the closed-form expectation, without simulating.
    #[arg(long)]
    analytic_only: bool,

    /// Also write the table to this file.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("refs").required(true).args(["trefs", "years"])))]
struct SweepArgs {
    #[command(flatten)]
    panel: PanelOpts,

    /// Comma-separated reference dates.
    #[arg(long, value_delimiter = ',', value_parser = parse_date_arg)]
    trefs: Vec<Date>,

    /// Years whose first trading day is used as reference date, e.g. `1998-2008` or `2003,2005`.
    #[arg(long, value_parser = parse_years)]
    years: Option<Years>,

    #[command(flatten)]
    series: SeriesOpts,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output panel CSV.
    #[arg(long)]
    out: PathBuf,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    #[arg(long, default_value_t = 500)]
    stocks: usize,

    #[arg(long, default_value_t = 100)]
    bubble_stocks: usize,

    #[arg(long, default_value_t = 400)]
    days: usize,

    /// Trading-day index where the bubble starts.
    #[arg(long, default_value_t = 150)]
    onset: usize,

    /// Trading-day index of the bubble top.
    #[arg(long, default_value_t = 250)]
    peak: usize,

    #[arg(long, default_value_t = 20)]
    crash_days: usize,
}

#[derive(Debug, Clone)]
struct Years(Vec<i32>);

fn parse_date_arg(s: &str) -> Result<Date, String> {
    parse_date(s).ok_or_else(|| format!("invalid date `{s}` (expected YYYY-MM-DD)"))
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("invalid number `{s}`"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1)"))
    }
}

fn parse_years(s: &str) -> Result<Years, String> {
    let bad = || format!("invalid years `{s}`");
    if let Some((a, b)) = s.split_once('-') {
        let a: i32 = a.trim().parse().map_err(|_| bad())?;
        let b: i32 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok(Years((a..=b).collect()));
    }
    s.split(',')
        .map(|y| y.trim().parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()
        .map(Years)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };

    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE as u8);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .expect("global thread pool is configured once");
    }

    let result = match cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Survival(a) => commands::survival(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

type CliResult = Result<(), CliError>;
