//! `cosmicdram` command-line front end.

mod commands;
mod inputs;
mod manifest;

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cosmicdram::mlpredict::Target;
use cosmicdram::testbench::ErrorClass;
use cosmicdram::timegrid::{Granularity, ScopeKind};

use inputs::{parse_duration, DataArgs};

#[derive(Debug, Parser)]
#[command(name = "cosmicdram", version, about = "Neutron flux versus DRAM error analysis")]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "COSMICDRAM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cross-check logs against the inventory and interval.
    Validate {
        #[command(flatten)]
        data: DataArgs,
        /// Also write validation.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-window neutron means and error counts.
    Timeline {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "day", value_parser = parse_granularity)]
        granularity: Granularity,
        #[arg(long)]
        out: PathBuf,
    },
    /// Kendall tau-b suite of error counts against neutron rate.
    Correlate(SuiteArgs),
    /// KS suite comparing high-neutron windows with the rest.
    Ks {
        #[command(flatten)]
        suite: SuiteArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [90.0, 95.0, 99.0, 99.9])]
        percentiles: Vec<f64>,
    },
    /// Hour-of-day error profiles before and after dropping the top units.
    Hourly {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "CE", value_parser = parse_class)]
        class: ErrorClass,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        utc_offset: i32,
        /// Fraction of units with the most errors to remove.
        #[arg(long, default_value_t = 0.0)]
        exclude_top_dimms: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Neutron by error-count 2-D histogram.
    Heatmap {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "CE", value_parser = parse_class)]
        class: ErrorClass,
        #[arg(long, default_value = "hour", value_parser = parse_granularity)]
        granularity: Granularity,
        #[arg(long, default_value_t = 20)]
        x_bins: usize,
        #[arg(long, default_value_t = 20)]
        y_bins: usize,
        #[arg(long)]
        y_log: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random-forest error prediction.
    Predict(PredictArgs),
    /// Generate a synthetic dataset from a TOML configuration.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct SuiteArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "CE", value_parser = parse_class)]
    class: ErrorClass,
    /// Scope kinds: system, rack, node, socket, dimm.
    #[arg(long, value_delimiter = ',', value_parser = parse_scope_kind)]
    scopes: Vec<ScopeKind>,
    /// Window granularities: hour, day, week, month.
    #[arg(long, value_delimiter = ',', value_parser = parse_granularity)]
    windows: Vec<Granularity>,
    #[arg(long)]
    drop_zero_windows: bool,
    /// Add per-DIMM scopes.
    #[arg(long)]
    dimm_scope: bool,
    /// Drop the partial first and last windows.
    #[arg(long)]
    exclude_clipped: bool,
    /// Leave rejected specs out of the table.
    #[arg(long)]
    skip_rejected: bool,
    /// Use raw scrubber counts even when exposure records exist.
    #[arg(long)]
    no_exposure_normalization: bool,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_parser = parse_target)]
    target: Target,
    /// Spacing of prediction ticks, e.g. 1h or 1d.
    #[arg(long, value_parser = parse_duration)]
    tick: chrono::Duration,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shuffle neutron features across rows.
    #[arg(long)]
    permute_neutron: bool,
    /// Also train with neutron features permuted and report the difference.
    #[arg(long)]
    compare: bool,
    /// `default` tunes over the built-in grid; `fixed` uses the values below.
    #[arg(long, default_value = "default", value_parser = ["default", "fixed"])]
    grid: String,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Zero means unlimited.
    #[arg(long, default_value_t = 8)]
    max_depth: usize,
    #[arg(long, default_value_t = 1)]
    min_leaf: usize,
    /// Negatives kept per positive in training; zero keeps all.
    #[arg(long, default_value_t = 1.0)]
    undersample: f64,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Node-hours spent per mitigation.
    #[arg(long, default_value_t = 1.0)]
    mitigation_cost: f64,
    /// Node-hours saved per predicted UE; defaults to half the mean job size.
    #[arg(long)]
    benefit: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    training_cost: f64,
    #[arg(long)]
    save_model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_class(s: &str) -> Result<ErrorClass, String> {
    ErrorClass::from_token(s).ok_or_else(|| format!("unknown error class {s:?}; use CE, UE or MB"))
}

fn parse_granularity(s: &str) -> Result<Granularity, String> {
    Granularity::from_token(s).ok_or_else(|| format!("unknown granularity {s:?}; use hour, day, week or month"))
}

fn parse_scope_kind(s: &str) -> Result<ScopeKind, String> {
    ScopeKind::from_token(s).ok_or_else(|| format!("unknown scope {s:?}; use system, rack, node, socket or dimm"))
}

fn parse_target(s: &str) -> Result<Target, String> {
    Target::from_token(s).ok_or_else(|| format!("unknown target {s:?}; use ue or ce"))
}

/// Input or usage problem.
const EXIT_INPUT: u8 = 1;
/// Internal invariant violation.
const EXIT_INTERNAL: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_INPUT);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INTERNAL);
        }
    }
    match panic::catch_unwind(AssertUnwindSafe(|| commands::run(cli.command))) {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
