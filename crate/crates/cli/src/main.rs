//! `bessmpc`: closed-loop simulations, parameter sweeps and synthetic prices.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bessmpc_core::domain::{Config, ConfigError, MarginPolicy, ParamError, PolicyKind, PriceSeries};
use bessmpc_core::ingest::{load_price_csv, synth_prices, write_price_csv, IngestError, SyntheticPriceParams};
use bessmpc_core::market::{run_receding_horizon, MarketError};
use bessmpc_core::metrics::{
    compute_revenue, write_report, Grid, GridError, ReportFormat, RevenueBreakdown, SweepAxis, SweepError, SweepPoint,
};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

const WORKERS_ENV: &str = "BESSMPC_WORKERS";

#[derive(Parser, Debug)]
#[command(
    name = "bessmpc",
    version,
    about = "Battery bidding under state-of-charge estimation error"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one closed-loop simulation.
    Simulate(SimulateArgs),
    /// Run a policy over a parameter grid and several seeds.
    Sweep(SweepArgs),
    /// Write a synthetic day-ahead price series as CSV.
    GenPrices(GenPricesArgs),
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// JSON configuration; missing keys take the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    prices: PriceArgs,
    /// Optimization horizon (hours).
    #[arg(long)]
    horizon: Option<usize>,
    /// Simulated length in days.
    #[arg(long, conflicts_with = "months", value_parser = clap::value_parser!(u64).range(1..))]
    days: Option<u64>,
    /// Simulated length in 30-day months.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    months: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct PriceArgs {
    /// Price CSV with `timestamp,price_eur_mwh` rows.
    #[arg(long, conflicts_with_all = ["synthetic", "price_seed", "base", "noise_std", "negative_prob"])]
    prices: Option<PathBuf>,
    /// JSON file with synthetic price parameters.
    #[arg(long)]
    synthetic: Option<PathBuf>,
    /// Seed of the synthetic series.
    #[arg(long)]
    price_seed: Option<u64>,
    /// Off-peak level of the synthetic series (€/MWh).
    #[arg(long)]
    base: Option<f64>,
    /// Hourly noise of the synthetic series (€/MWh).
    #[arg(long)]
    noise_std: Option<f64>,
    /// Chance that a synthetic hour clears negative.
    #[arg(long)]
    negative_prob: Option<f64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// none, fixed, adaptive or uncertainty-aware.
    #[arg(long, default_value = "none")]
    policy: PolicyKind,
    /// Constant margin of the fixed policy.
    #[arg(long, conflicts_with = "w_bar")]
    m: Option<f64>,
    /// Per-hour margin growth of the adaptive and uncertainty-aware policies.
    #[arg(long)]
    w_bar: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    policy: PolicyKind,
    /// Parameter grid `start:stop:step`, both ends included.
    #[arg(long)]
    grid: Option<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    /// Format of the per-point table.
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
}

#[derive(Args, Debug)]
struct GenPricesArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    days: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file with synthetic price parameters.
    #[arg(long)]
    synthetic: Option<PathBuf>,
    #[arg(long)]
    base: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    negative_prob: Option<f64>,
    /// Destination CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Io(_) => 4,
            CliError::Internal(_) => 5,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ParamError> for CliError {
    fn from(e: ParamError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Params(_) => CliError::Config(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<MarketError> for CliError {
    fn from(e: MarketError) -> Self {
        match e {
            MarketError::Config(_) | MarketError::PriceCoverage { .. } => CliError::Config(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Where the prices came from, embedded in the manifest.
#[derive(Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum PriceSource {
    File(PathBuf),
    Synthetic(SyntheticPriceParams),
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    config: &'a Config,
    seed: u64,
    prices: &'a PriceSource,
    breakdown: &'a RevenueBreakdown,
}

#[derive(Debug, Serialize)]
struct SweepManifest<'a> {
    config: &'a Config,
    seeds: &'a [u64],
    prices: &'a PriceSource,
    points: &'a [SweepPoint],
    failures: &'a [bessmpc_core::metrics::SweepFailure],
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_workers() {
        eprintln!("error: {e}");
        return ExitCode::from(e.code());
    }
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::GenPrices(a) => cmd_gen_prices(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn configure_workers() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn load_config(run: &RunArgs) -> Result<Config, CliError> {
    let mut cfg = match &run.config {
        Some(path) => Config::from_json(&fs::read_to_string(path).map_err(|e| io_err(path, e))?)?,
        None => Config::default(),
    };
    if let Some(h) = run.horizon {
        cfg.sim.horizon = h;
    }
    if let Some(d) = run.days {
        cfg.sim.hours = d as usize * 24;
    }
    if let Some(m) = run.months {
        cfg.sim.hours = m as usize * 30 * 24;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn synthetic_params(file: Option<&PathBuf>) -> Result<SyntheticPriceParams, CliError> {
    match file {
        Some(path) => serde_json::from_str(&fs::read_to_string(path).map_err(|e| io_err(path, e))?)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display()))),
        None => Ok(SyntheticPriceParams::default()),
    }
}

/// Loads the file, or generates a synthetic series long enough for the run.
fn resolve_prices(args: &PriceArgs, cfg: &Config) -> Result<(PriceSeries, PriceSource), CliError> {
    if let Some(path) = &args.prices {
        let series = load_price_csv(path).map_err(|e| match e {
            IngestError::Params(_) => CliError::from(e),
            other => io_err(path, other),
        })?;
        return Ok((series, PriceSource::File(path.clone())));
    }
    let mut p = synthetic_params(args.synthetic.as_ref())?;
    if let Some(s) = args.price_seed {
        p.seed = s;
    }
    if let Some(v) = args.base {
        p.base = v;
    }
    if let Some(v) = args.noise_std {
        p.noise_std = v;
    }
    if let Some(v) = args.negative_prob {
        p.negative_prob = v;
    }
    p.days = (cfg.sim.hours + cfg.sim.horizon).div_ceil(24);
    let series = synth_prices(&p)?;
    Ok((series, PriceSource::Synthetic(p)))
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn policy_for(
    kind: PolicyKind,
    base: &MarginPolicy,
    m: Option<f64>,
    w_bar: Option<f64>,
) -> Result<MarginPolicy, CliError> {
    let mut pol = MarginPolicy { kind, ..*base };
    match (kind, m, w_bar) {
        (PolicyKind::Fixed, Some(m), None) => pol.m_fixed = m,
        (PolicyKind::Adaptive | PolicyKind::UncertaintyAware, None, Some(w)) => pol.w_bar = w,
        (_, None, None) => {}
        (PolicyKind::Fixed, _, Some(_)) => {
            return Err(CliError::Usage("--w-bar does not apply to the fixed policy".into()))
        }
        (_, Some(_), _) => return Err(CliError::Usage(format!("--m does not apply to the {kind} policy"))),
        (_, _, Some(_)) => return Err(CliError::Usage(format!("--w-bar does not apply to the {kind} policy"))),
    }
    Ok(pol)
}

const TABLE_HEADER: &str =
    "policy             parameter   R_total    R_dam      R_fcr      C_imb     C_deg     short_MWh  short_%  margin";

fn table_row(policy: PolicyKind, parameter: f64, b: &RevenueBreakdown) -> String {
    format!(
        "{:<18} {:<11.5} {:<10.1} {:<10.1} {:<10.1} {:<9.1} {:<9.1} {:<10.3} {:<8.2} {:.4}",
        policy.as_str(),
        parameter,
        b.r_total,
        b.r_dam,
        b.r_fcr,
        b.c_imb,
        b.c_deg,
        b.shortfall_energy,
        b.shortfall_hours_pct,
        b.mean_margin
    )
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.run)?;
    cfg.policy = policy_for(args.policy, &cfg.policy, args.m, args.w_bar)?;
    cfg.validate()?;
    let (prices, source) = resolve_prices(&args.run.prices, &cfg)?;
    create_out(&args.run.out)?;
    let log = run_receding_horizon(&cfg, &prices, &cfg.policy, args.seed)?;
    let breakdown = compute_revenue(&log, &cfg.market);

    let log_path = args.run.out.join("log.csv");
    let mut buf = Vec::new();
    log.write_csv(&mut buf).map_err(|e| io_err(&log_path, e))?;
    write_file(&log_path, &buf)?;
    let manifest = RunManifest {
        config: &cfg,
        seed: args.seed,
        prices: &source,
        breakdown: &breakdown,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(&args.run.out.join("summary.json"), format!("{json}\n").as_bytes())?;

    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{TABLE_HEADER}");
    let _ = writeln!(
        out,
        "{}",
        table_row(cfg.policy.kind, cfg.policy.parameter(), &breakdown)
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.run)?;
    let values = match (&args.grid, args.policy) {
        (Some(g), _) => g.parse::<Grid>()?.points(),
        (None, PolicyKind::None) => vec![0.0],
        (None, kind) => return Err(CliError::Usage(format!("--grid is required for the {kind} policy"))),
    };
    if args.seeds.is_empty() {
        return Err(CliError::Usage("at least one seed is required".into()));
    }
    let (prices, source) = resolve_prices(&args.run.prices, &cfg)?;
    create_out(&args.run.out)?;
    let axes = [SweepAxis {
        kind: args.policy,
        values,
    }];
    let result = bessmpc_core::metrics::sweep(&cfg, &prices, &axes, &args.seeds)?;
    for f in &result.failures {
        eprintln!(
            "warning: {} {} seed {} failed: {}",
            f.policy, f.parameter, f.seed, f.message
        );
    }

    let (name, format) = match args.format {
        ReportFormat::Csv => ("sweep.csv", ReportFormat::Csv),
        ReportFormat::Json => ("sweep.json", ReportFormat::Json),
    };
    let path = args.run.out.join(name);
    let mut buf = Vec::new();
    write_report(&result.points, format, &mut buf).map_err(|e| io_err(&path, e))?;
    write_file(&path, &buf)?;

    let runs: Vec<SweepPoint> = result
        .runs
        .iter()
        .map(|r| SweepPoint {
            policy: r.policy,
            parameter: r.parameter,
            seeds: 1,
            breakdown: r.breakdown,
        })
        .collect();
    let runs_path = args.run.out.join("sweep_runs.csv");
    let mut buf = Vec::new();
    write_report(&runs, ReportFormat::Csv, &mut buf).map_err(|e| io_err(&runs_path, e))?;
    write_file(&runs_path, &buf)?;

    let manifest = SweepManifest {
        config: &cfg,
        seeds: &args.seeds,
        prices: &source,
        points: &result.points,
        failures: &result.failures,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(&args.run.out.join("summary.json"), format!("{json}\n").as_bytes())?;

    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{TABLE_HEADER}");
    for p in &result.points {
        let _ = writeln!(out, "{}", table_row(p.policy, p.parameter, &p.breakdown));
    }
    if result.points.is_empty() {
        return Err(CliError::Internal("every sweep point failed".into()));
    }
    Ok(())
}

fn cmd_gen_prices(args: GenPricesArgs) -> Result<(), CliError> {
    let mut p = synthetic_params(args.synthetic.as_ref())?;
    p.days = args.days as usize;
    p.seed = args.seed;
    if let Some(v) = args.base {
        p.base = v;
    }
    if let Some(v) = args.noise_std {
        p.noise_std = v;
    }
    if let Some(v) = args.negative_prob {
        p.negative_prob = v;
    }
    let series = synth_prices(&p)?;
    let mut buf = Vec::new();
    write_price_csv(&series, &mut buf)?;
    write_file(&args.out, &buf)?;
    println!("{} hours written to {}", series.len(), args.out.display());
    Ok(())
}
