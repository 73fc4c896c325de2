//! `volscale` command-line front end.
//!
//! Every subcommand writes plain CSV/JSON into the output directory together
//! with a `<subcommand>.manifest.json` that `volscale rerun` replays.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use volscale_core::ingest::{
    BarSchema, ColumnRef, TimestampFormat, TradingCalendarConfig, WeekendPolicy,
};
use volscale_core::proxies::RealizedNormalization;
use volscale_core::{ErrorCategory, FilterVariant, ProxyKind, ScaleWindow};

mod commands;
pub mod config;
pub mod manifest;

pub use manifest::{FileDigest, RunManifest};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Bad arguments or configuration.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Input data that cannot be used, or a replay that did not reproduce.
#[derive(Debug)]
pub struct DataError(pub String);

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DataError {}

/// Process exit status for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if let Some(e) = err.downcast_ref::<clap::Error>() {
        return if e.use_stderr() { EXIT_USAGE } else { 0 };
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<volscale_core::Error>() {
            return match e.category() {
                ErrorCategory::Usage => EXIT_USAGE,
                ErrorCategory::Data => EXIT_DATA,
                ErrorCategory::Numerical => EXIT_NUMERICAL,
            };
        }
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if cause.is::<DataError>()
            || cause.is::<std::io::Error>()
            || cause.is::<serde_json::Error>()
        {
            return EXIT_DATA;
        }
    }
    1
}

#[derive(Debug, Parser)]
#[command(
    name = "volscale",
    version,
    about = "Fractional volatility simulation and Hurst exponent estimation"
)]
pub struct Cli {
    /// TOML file whose values apply where flags are absent.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[arg(
        long,
        global = true,
        env = "VOLSCALE_OUT_DIR",
        default_value = ".",
        value_name = "DIR"
    )]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a volatility model and write its path and daily series.
    Simulate(SimulateArgs),
    /// Absolute-moment log-log curve with small- and large-scale regressions.
    Loglog(LoglogArgs),
    /// Remove measurement-noise and smoothing bias from a second-moment curve.
    Filter(FilterArgs),
    /// Perceived Hurst exponent of averaged fBm variance on scale pairs.
    BiasTable(BiasTableArgs),
    /// Raw Hurst estimates of minute-bar data at several realized-variance steps.
    StepSensitivity(StepArgs),
    /// Minute bars to a daily realized-variance series.
    Ingest(IngestArgs),
    /// Minute bars to a small/large-scale Hurst table, raw and filtered.
    Pipeline(PipelineArgs),
    /// Write synthetic RFSV minute bars.
    SynthBars(SynthBarsArgs),
    /// Multi-seed simulation studies.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Replay a run manifest, optionally checking outputs byte for byte.
    Rerun(RerunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Loglog(_) => "loglog",
            Command::Filter(_) => "filter",
            Command::BiasTable(_) => "bias-table",
            Command::StepSensitivity(_) => "step-sensitivity",
            Command::Ingest(_) => "ingest",
            Command::Pipeline(_) => "pipeline",
            Command::SynthBars(_) => "synth-bars",
            Command::Experiment(_) => "experiment",
            Command::Rerun(_) => "rerun",
        }
    }
}

fn parse_window(s: &str) -> std::result::Result<ScaleWindow, String> {
    let (a, b) = s
        .split_once([':', '-'])
        .ok_or_else(|| format!("expected MIN:MAX, got '{s}'"))?;
    let min: u32 = a.trim().parse().map_err(|_| format!("bad scale '{a}'"))?;
    let max: u32 = b.trim().parse().map_err(|_| format!("bad scale '{b}'"))?;
    if min == 0 || min >= max {
        return Err(format!(
            "scale window {min}:{max} must satisfy 1 <= MIN < MAX"
        ));
    }
    Ok(ScaleWindow::new(min, max))
}

fn parse_pair(s: &str) -> std::result::Result<(u32, u32), String> {
    parse_window(s).map(|w| (w.min, w.max))
}

fn parse_kind(s: &str) -> std::result::Result<ProxyKind, String> {
    s.parse::<ProxyKind>().map_err(|e| e.to_string())
}

fn parse_variant(s: &str) -> std::result::Result<FilterVariant, String> {
    s.parse::<FilterVariant>().map_err(|e| e.to_string())
}

fn parse_boundary(s: &str) -> std::result::Result<u32, String> {
    let (h, m) = s
        .split_once(':')
        .ok_or_else(|| format!("expected HH:MM, got '{s}'"))?;
    let h: u32 = h.parse().map_err(|_| format!("bad hour in '{s}'"))?;
    let m: u32 = m.parse().map_err(|_| format!("bad minute in '{s}'"))?;
    if h >= 24 || m >= 60 {
        return Err(format!("'{s}' is not a time of day"));
    }
    Ok(h * 60 + m)
}

fn parse_delimiter(s: &str) -> std::result::Result<u8, String> {
    match s {
        "tab" | "\\t" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(format!("delimiter must be one ASCII character, got '{s}'")),
    }
}

fn parse_ts_format(s: &str) -> std::result::Result<TimestampFormat, String> {
    Ok(match s {
        "auto" => TimestampFormat::Auto,
        "iso8601" | "iso" => TimestampFormat::Iso8601,
        "epoch_s" | "epoch-s" => TimestampFormat::EpochSeconds,
        "epoch_ms" | "epoch-ms" => TimestampFormat::EpochMillis,
        p if p.contains('%') => TimestampFormat::Pattern(p.to_string()),
        other => return Err(format!("unknown timestamp format '{other}'")),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Sum,
    Average,
}

impl From<Normalization> for RealizedNormalization {
    fn from(n: Normalization) -> Self {
        match n {
            Normalization::Sum => RealizedNormalization::Sum,
            Normalization::Average => RealizedNormalization::Average,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Weekend {
    #[value(name = "drop_incomplete", alias = "drop-incomplete")]
    DropIncomplete,
    #[value(name = "pad_forward", alias = "pad-forward")]
    PadForward,
}

/// Minute-bar file layout and trading calendar.
#[derive(Debug, Clone, Args, Serialize)]
pub struct BarArgs {
    /// Minute-bar CSV with a timestamp and a price column.
    #[arg(long, value_name = "FILE")]
    pub bars: PathBuf,
    /// Timestamp column, by zero-based index or header name.
    #[arg(long, default_value = "0")]
    #[serde(serialize_with = "ser_column")]
    pub ts_col: ColumnRef,
    #[arg(long, default_value = "1")]
    #[serde(serialize_with = "ser_column")]
    pub price_col: ColumnRef,
    #[arg(long, default_value = ",", value_parser = parse_delimiter)]
    pub delimiter: u8,
    /// Force a header row; detected from the first row otherwise.
    #[arg(long, conflicts_with = "no_header")]
    pub header: bool,
    #[arg(long)]
    pub no_header: bool,
    /// auto, iso8601, epoch_s, epoch_ms, or a strftime pattern.
    #[arg(long, default_value = "auto", value_parser = parse_ts_format)]
    pub ts_format: TimestampFormat,
    #[arg(long, default_value_t = 0)]
    pub max_bad_rows: usize,
    /// Start of the trading day, UTC.
    #[arg(long, default_value = "00:00", value_parser = parse_boundary)]
    pub day_boundary: u32,
    #[arg(long, value_enum, default_value = "drop_incomplete")]
    pub weekend_policy: Weekend,
    #[arg(long, default_value_t = 1380)]
    pub min_bars: u32,
}

fn ser_column<S: serde::Serializer>(c: &ColumnRef, s: S) -> std::result::Result<S::Ok, S::Error> {
    match c {
        ColumnRef::Index(i) => s.serialize_u64(*i as u64),
        ColumnRef::Name(n) => s.serialize_str(n),
    }
}

impl BarArgs {
    pub fn schema(&self) -> BarSchema {
        BarSchema {
            timestamp_column: self.ts_col.clone(),
            price_column: self.price_col.clone(),
            has_header: match (self.header, self.no_header) {
                (true, _) => Some(true),
                (_, true) => Some(false),
                _ => None,
            },
            delimiter: self.delimiter,
            timestamp_format: self.ts_format.clone(),
            max_bad_rows: self.max_bad_rows,
        }
    }

    pub fn calendar(&self) -> TradingCalendarConfig {
        TradingCalendarConfig {
            day_boundary_minutes: self.day_boundary,
            weekend_policy: match self.weekend_policy {
                Weekend::DropIncomplete => WeekendPolicy::DropIncomplete,
                Weekend::PadForward => WeekendPolicy::PadForward,
            },
            min_bars_per_day: self.min_bars,
        }
    }
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct WindowArgs {
    /// Small-scale regression window in days.
    #[arg(long, default_value = "1:21", value_parser = parse_window)]
    pub small: ScaleWindow,
    /// Large-scale regression window in days.
    #[arg(long, default_value = "42:95", value_parser = parse_window)]
    pub large: ScaleWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Fbm,
    Fou,
    Rfsv,
    #[value(name = "gbm_var", alias = "gbm-var")]
    GbmVar,
    #[value(name = "noisy_gbm_var", alias = "noisy-gbm-var")]
    NoisyGbmVar,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub model: Model,
    #[arg(long, default_value_t = 0.5)]
    pub hurst: f64,
    /// Vol of vol (fBm scale).
    #[arg(long, alias = "vol-of-vol", default_value_t = 1.0)]
    pub xi: f64,
    #[arg(long, default_value_t = 2500)]
    pub days: usize,
    /// Model samples per day; for rfsv also the intraday returns per day.
    #[arg(long = "n", alias = "steps-per-day", default_value_t = 1)]
    pub steps_per_day: u32,
    /// Price steps per model step (rfsv).
    #[arg(long, default_value_t = 1)]
    pub substeps: u32,
    /// Daily volatility level (rfsv).
    #[arg(long, default_value_t = 0.006)]
    pub sigma_base: f64,
    /// Mean-reversion rate per day (fou).
    #[arg(long, default_value_t = 0.02)]
    pub reversion_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub long_mean: f64,
    /// Initial volatility (gbm_var, noisy_gbm_var).
    #[arg(long, default_value_t = 4.62e-3)]
    pub sigma0: f64,
    /// Variance vol of vol per square-root day (gbm_var, noisy_gbm_var).
    #[arg(long, default_value_t = 0.038)]
    pub beta: f64,
    /// Relative sd of the observation noise (noisy_gbm_var).
    #[arg(long, default_value_t = 0.25)]
    pub noise_rel_sd: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also write the full model path.
    #[arg(long)]
    pub spot_path: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
#[group(id = "source", required = true, multiple = false, args = ["series", "bars", "theoretical"])]
pub struct LoglogArgs {
    /// Daily series CSV (date, proxy_value, n_intraday).
    #[arg(long, value_name = "FILE")]
    pub series: Option<PathBuf>,
    /// Kind of the values in --series.
    #[arg(long, default_value = "variance", value_parser = parse_kind)]
    pub kind: ProxyKind,
    /// Minute-bar CSV, ingested with the default layout and calendar.
    #[arg(long, value_name = "FILE")]
    pub bars: Option<PathBuf>,
    #[arg(long, default_value_t = 1440)]
    pub n_per_day: u32,
    #[arg(long, value_enum, default_value = "sum")]
    pub normalization: Normalization,
    /// Exact fBm moments instead of data.
    #[arg(long)]
    pub theoretical: bool,
    #[arg(long, default_value_t = 0.5)]
    pub hurst: f64,
    #[arg(long, alias = "vol-of-vol", default_value_t = 1.0)]
    pub xi: f64,
    /// Series length assumed by --theoretical.
    #[arg(long, default_value_t = 10_000)]
    pub days: usize,
    /// Proxy whose moments are taken.
    #[arg(long, default_value = "log_volatility", value_parser = parse_kind)]
    pub proxy: ProxyKind,
    /// Moment order.
    #[arg(long, default_value_t = 2.0)]
    pub k: f64,
    /// Explicit scales; the default grid otherwise.
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<u32>>,
    /// Largest scale, at most a third of the series length.
    #[arg(long)]
    pub tau_max: Option<u32>,
    #[command(flatten)]
    pub windows: WindowArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FilterArgs {
    /// Raw curve CSV as written by `loglog`.
    #[arg(long, value_name = "FILE")]
    pub curve: PathBuf,
    /// Intraday returns per day behind the curve.
    #[arg(long)]
    pub n: u32,
    /// Smoothing-factor Hurst input; the raw large-scale estimate otherwise.
    #[arg(long)]
    pub hurst_input: Option<f64>,
    #[arg(long, default_value = "log_vol_fbm", value_parser = parse_variant)]
    pub variant: FilterVariant,
    /// Skip the measurement-noise offset.
    #[arg(long)]
    pub no_measurement: bool,
    /// Skip the smoothing-factor division.
    #[arg(long)]
    pub no_smoothing: bool,
    /// Also filter with each of these inputs and report convexity.
    #[arg(long, value_delimiter = ',')]
    pub hurst_input_sweep: Option<Vec<f64>>,
    #[command(flatten)]
    pub windows: WindowArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BiasTableArgs {
    /// Input Hurst exponents; 0.05 to 0.95 by 0.05 otherwise.
    #[arg(long, value_delimiter = ',')]
    pub h_in: Option<Vec<f64>>,
    /// Samples per averaging window.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub n: Vec<u32>,
    /// Averaging window in days.
    #[arg(long, default_value_t = 1)]
    pub d: u32,
    /// Scale pairs TAU1:TAU2.
    #[arg(long, value_delimiter = ',', default_value = "1:2,5:10", value_parser = parse_pair)]
    pub pairs: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StepArgs {
    #[command(flatten)]
    pub bars: BarArgs,
    /// Realized-variance steps in minutes; each must divide 1440.
    #[arg(long, value_delimiter = ',', default_value = "1,5,15,40")]
    pub steps: Vec<u32>,
    #[command(flatten)]
    pub windows: WindowArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IngestArgs {
    #[command(flatten)]
    pub bars: BarArgs,
    #[arg(long, default_value_t = 1440)]
    pub n_per_day: u32,
    #[arg(long, value_enum, default_value = "sum")]
    pub normalization: Normalization,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub bars: BarArgs,
    /// Row label; the file stem otherwise.
    #[arg(long)]
    pub symbol: Option<String>,
    #[arg(long, default_value_t = 1440)]
    pub n_per_day: u32,
    #[arg(long, value_enum, default_value = "sum")]
    pub normalization: Normalization,
    #[arg(long, default_value = "log_vol_fbm", value_parser = parse_variant)]
    pub variant: FilterVariant,
    #[arg(long)]
    pub hurst_input: Option<f64>,
    #[command(flatten)]
    pub windows: WindowArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthBarsArgs {
    #[arg(long, default_value_t = 0.25)]
    pub hurst: f64,
    #[arg(long, alias = "vol-of-vol", default_value_t = 0.3)]
    pub xi: f64,
    #[arg(long, default_value_t = 0.006)]
    pub sigma_base: f64,
    #[arg(long, default_value_t = 500)]
    pub days: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// First trading day, YYYY-MM-DD.
    #[arg(long, default_value = "2021-01-04")]
    pub start: String,
    #[arg(long, default_value_t = 1.1)]
    pub initial_price: f64,
    #[arg(long, default_value_t = 0.002)]
    pub missing_fraction: f64,
    #[arg(long, default_value_t = 0.001)]
    pub duplicate_fraction: f64,
    #[arg(long, default_value_t = 0.001)]
    pub swap_fraction: f64,
    #[command(flatten)]
    pub windows: WindowArgs,
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    /// RFSV realized volatility, seed-averaged raw and filtered curves.
    FilterStudy(FilterStudyArgs),
    /// Perceived Hurst exponent of noisy gBm variance over a vol-of-vol sweep.
    NoisyGbm(NoisyGbmArgs),
    /// Convexity statistic of fOU paths.
    FouConvexity(FouConvexityArgs),
    /// Averaged fBm variance increments against their closed form.
    SmoothingMc(SmoothingMcArgs),
}

impl ExperimentCommand {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentCommand::FilterStudy(_) => "filter-study",
            ExperimentCommand::NoisyGbm(_) => "noisy-gbm",
            ExperimentCommand::FouConvexity(_) => "fou-convexity",
            ExperimentCommand::SmoothingMc(_) => "smoothing-mc",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FilterStudyArgs {
    #[arg(long, default_value_t = 0.25)]
    pub hurst: f64,
    #[arg(long, alias = "vol-of-vol", default_value_t = 0.10)]
    pub xi: f64,
    #[arg(long, default_value_t = 36)]
    pub n: u32,
    #[arg(long, default_value_t = 1)]
    pub substeps: u32,
    #[arg(long, default_value_t = 0.006)]
    pub sigma_base: f64,
    #[arg(long, default_value_t = 3206)]
    pub days: usize,
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub hurst_input: Option<f64>,
    #[arg(long, default_value = "1:50", value_parser = parse_window)]
    pub window: ScaleWindow,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NoisyGbmArgs {
    #[arg(long, default_value_t = 4.62e-3)]
    pub sigma0: f64,
    /// Vol-of-vol values; 12 log-spaced values from 0.001 to 0.2 otherwise.
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.25)]
    pub noise_rel_sd: f64,
    #[arg(long, default_value_t = 2500)]
    pub days: usize,
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "1:21", value_parser = parse_window)]
    pub window: ScaleWindow,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FouConvexityArgs {
    #[arg(long, default_value_t = 0.1)]
    pub hurst: f64,
    #[arg(long, alias = "vol-of-vol", default_value_t = 0.3)]
    pub xi: f64,
    #[arg(long, default_value_t = 0.02)]
    pub reversion_rate: f64,
    #[arg(long, default_value_t = 10_000)]
    pub days: usize,
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "1:5", value_parser = parse_window)]
    pub small: ScaleWindow,
    #[arg(long, default_value = "200:500", value_parser = parse_window)]
    pub large: ScaleWindow,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SmoothingMcArgs {
    #[arg(long, default_value_t = 0.15)]
    pub hurst: f64,
    #[arg(long, default_value_t = 100)]
    pub n: u32,
    #[arg(long, default_value_t = 2000)]
    pub days: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,10")]
    pub taus: Vec<u32>,
    #[arg(long, default_value_t = 50)]
    pub seeds: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RerunArgs {
    #[arg(value_name = "MANIFEST")]
    pub manifest: PathBuf,
    /// Fail unless every output matches the manifest digests.
    #[arg(long)]
    pub verify: bool,
}

/// Files produced by one invocation.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub outputs: Vec<String>,
    pub manifest: Option<PathBuf>,
}

impl Outcome {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Parses `argv` (program name first), merges the config file, and runs the
/// subcommand.
pub fn run<I, T>(argv: I) -> Result<Outcome>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let raw: Vec<String> = argv
        .into_iter()
        .map(|a| {
            a.into()
                .into_string()
                .map_err(|a| UsageError(format!("argument {a:?} is not UTF-8")))
        })
        .collect::<std::result::Result<_, _>>()?;
    let merged = match config::config_path(&raw) {
        Some(path) => config::merge(&raw, &config::load(Path::new(&path))?)?,
        None => raw,
    };
    let cli = Cli::try_parse_from(&merged)?;
    commands::dispatch(cli, config::strip_globals(&merged))
}

/// Clap command tree, for help output and completions.
pub fn command() -> clap::Command {
    Cli::command()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn window_parsing() {
        assert_eq!(parse_window("42:95"), Ok(ScaleWindow::new(42, 95)));
        assert_eq!(parse_window("1-21"), Ok(ScaleWindow::SMALL));
        assert!(parse_window("5:5").is_err());
        assert!(parse_window("0:5").is_err());
        assert_eq!(parse_boundary("21:30"), Ok(1290));
        assert!(parse_boundary("24:00").is_err());
    }
}
