//! Revenue metrics over simulation logs and parameter sweeps.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Config, MarginPolicy, MarketParams, PolicyKind, PriceSeries};
use crate::market::{run_receding_horizon, settle_imbalance, SimulationLog};

/// Economic outcome of a run (all money in €).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RevenueBreakdown {
    pub r_total: f64,
    pub r_dam: f64,
    pub r_fcr: f64,
    /// Imbalance settlement, signed (negative is a cost).
    pub c_imb: f64,
    /// Degradation cost, positive.
    pub c_deg: f64,
    /// MWh.
    pub shortfall_energy: f64,
    pub shortfall_hours_pct: f64,
    pub mean_margin: f64,
}

impl RevenueBreakdown {
    fn from_parts(r_dam: f64, r_fcr: f64, c_imb: f64, c_deg: f64) -> Self {
        Self {
            r_total: total(r_dam, r_fcr, c_imb, c_deg),
            r_dam,
            r_fcr,
            c_imb,
            c_deg,
            ..Self::default()
        }
    }
}

/// The one place the total is formed, so every row reproduces it bit for bit.
pub fn total(r_dam: f64, r_fcr: f64, c_imb: f64, c_deg: f64) -> f64 {
    r_dam + r_fcr + c_imb - c_deg
}

/// Recomputes every figure from the raw per-hour quantities of the log.
/// Sums run in hour order.
pub fn compute_revenue(log: &SimulationLog, mkt: &MarketParams) -> RevenueBreakdown {
    let dt = log.config.battery.dt;
    let (mut r_dam, mut r_fcr, mut c_imb, mut c_deg) = (0.0, 0.0, 0.0, 0.0);
    let mut shortfall_energy = 0.0;
    let mut short_hours = 0usize;
    let mut margin_sum = 0.0;
    for r in &log.records {
        r_dam += dt * r.pi_da * r.p_da_bid;
        r_fcr += dt * mkt.pi_fcr * r.p_fcr_bid;
        c_imb += dt * settle_imbalance(r.p_da_bid, r.p_true, r.pi_da, mkt);
        c_deg += dt * mkt.c_deg * r.p_true_dis;
        shortfall_energy += r.shortfall;
        if !r.compliant {
            short_hours += 1;
        }
        margin_sum += r.margin_m;
    }
    let n = log.records.len();
    let mut out = RevenueBreakdown::from_parts(r_dam, r_fcr, c_imb, c_deg);
    out.shortfall_energy = shortfall_energy;
    if n > 0 {
        out.shortfall_hours_pct = 100.0 * short_hours as f64 / n as f64;
        out.mean_margin = mean_exact(log.records.iter().map(|r| r.margin_m), margin_sum, n);
    }
    out
}

/// Arithmetic mean; a constant series returns its value unchanged.
fn mean_exact(mut values: impl Iterator<Item = f64>, sum: f64, n: usize) -> f64 {
    let first = values.next().unwrap_or(0.0);
    if values.all(|v| v == first) {
        first
    } else {
        sum / n as f64
    }
}

/// Averages breakdowns field by field; the total is re-formed from the
/// averaged components.
pub fn average(items: &[RevenueBreakdown]) -> RevenueBreakdown {
    if items.is_empty() {
        return RevenueBreakdown::default();
    }
    let n = items.len();
    let mean = |f: fn(&RevenueBreakdown) -> f64| {
        let sum: f64 = items.iter().map(f).sum();
        mean_exact(items.iter().map(f), sum, n)
    };
    let mut out = RevenueBreakdown::from_parts(
        mean(|b| b.r_dam),
        mean(|b| b.r_fcr),
        mean(|b| b.c_imb),
        mean(|b| b.c_deg),
    );
    out.shortfall_energy = mean(|b| b.shortfall_energy);
    out.shortfall_hours_pct = mean(|b| b.shortfall_hours_pct);
    out.mean_margin = mean(|b| b.mean_margin);
    out
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid must look like start:stop:step, got `{0}`")]
    Syntax(String),
    #[error("grid step must be positive and finite")]
    Step,
    #[error("grid is empty: stop lies below start")]
    Empty,
}

/// Inclusive equidistant grid `start:stop:step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    /// Points `start + i * step`; the count is rounded so that a stop that
    /// is a whole number of steps away is always included.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

impl FromStr for Grid {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts.as_slice() else {
            return Err(GridError::Syntax(s.to_string()));
        };
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| GridError::Syntax(s.to_string()));
        let (start, stop, step) = (num(a)?, num(b)?, num(c)?);
        if !(step.is_finite() && step > 0.0) {
            return Err(GridError::Step);
        }
        if !(start.is_finite() && stop.is_finite()) {
            return Err(GridError::Syntax(s.to_string()));
        }
        if stop < start {
            return Err(GridError::Empty);
        }
        Ok(Grid { start, stop, step })
    }
}

/// One policy and the parameter values to try for it.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub kind: PolicyKind,
    pub values: Vec<f64>,
}

/// Seed-averaged outcome of one (policy, parameter) point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub policy: PolicyKind,
    pub parameter: f64,
    pub seeds: usize,
    pub breakdown: RevenueBreakdown,
}

/// Outcome of one seed at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub policy: PolicyKind,
    pub parameter: f64,
    pub seed: u64,
    pub breakdown: RevenueBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub policy: PolicyKind,
    pub parameter: f64,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepResult {
    /// One entry per requested point whose seeds all succeeded, in request order.
    pub points: Vec<SweepPoint>,
    pub runs: Vec<SweepRun>,
    pub failures: Vec<SweepFailure>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("sweep needs at least one policy, parameter and seed")]
    EmptyGrid,
}

/// Runs every (policy, parameter, seed) on the current rayon pool. A failing
/// run is recorded and its point dropped; the other points still complete.
pub fn sweep(
    config: &Config,
    prices: &PriceSeries,
    axes: &[SweepAxis],
    seeds: &[u64],
) -> Result<SweepResult, SweepError> {
    if axes.is_empty() || seeds.is_empty() || axes.iter().any(|a| a.values.is_empty()) {
        return Err(SweepError::EmptyGrid);
    }
    let jobs: Vec<(PolicyKind, f64, u64)> = axes
        .iter()
        .flat_map(|a| {
            a.values
                .iter()
                .flat_map(move |&v| seeds.iter().map(move |&s| (a.kind, v, s)))
        })
        .collect();
    let outcomes: Vec<Result<RevenueBreakdown, String>> = jobs
        .par_iter()
        .map(|&(kind, value, seed)| {
            let pol = MarginPolicy { kind, ..config.policy }.with_parameter(value);
            log::info!("sweep point {} {value} seed {seed}", kind.as_str());
            run_receding_horizon(config, prices, &pol, seed)
                .map(|log| compute_revenue(&log, &config.market))
                .map_err(|e| e.to_string())
        })
        .collect();

    let mut result = SweepResult::default();
    for (chunk_jobs, chunk) in jobs.chunks(seeds.len()).zip(outcomes.chunks(seeds.len())) {
        let (kind, value, _) = chunk_jobs[0];
        let mut ok = Vec::with_capacity(seeds.len());
        for (&(_, _, seed), outcome) in chunk_jobs.iter().zip(chunk) {
            match outcome {
                Ok(b) => {
                    ok.push(*b);
                    result.runs.push(SweepRun {
                        policy: kind,
                        parameter: value,
                        seed,
                        breakdown: *b,
                    });
                }
                Err(message) => result.failures.push(SweepFailure {
                    policy: kind,
                    parameter: value,
                    seed,
                    message: message.clone(),
                }),
            }
        }
        if ok.len() == seeds.len() {
            result.points.push(SweepPoint {
                policy: kind,
                parameter: value,
                seeds: ok.len(),
                breakdown: average(&ok),
            });
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

pub const REPORT_HEADER: [&str; 11] = [
    "policy",
    "parameter",
    "seeds",
    "r_total_eur",
    "r_dam_eur",
    "r_fcr_eur",
    "c_imb_eur",
    "c_deg_eur",
    "shortfall_energy_mwh",
    "shortfall_hours_pct",
    "mean_margin",
];

/// Writes one row per point. Floats use the shortest round-trip form, so
/// identical inputs give identical bytes.
pub fn write_report<W: Write>(points: &[SweepPoint], format: ReportFormat, mut out: W) -> std::io::Result<()> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(REPORT_HEADER)?;
            for p in points {
                let b = &p.breakdown;
                w.write_record([
                    p.policy.as_str().to_string(),
                    p.parameter.to_string(),
                    p.seeds.to_string(),
                    b.r_total.to_string(),
                    b.r_dam.to_string(),
                    b.r_fcr.to_string(),
                    b.c_imb.to_string(),
                    b.c_deg.to_string(),
                    b.shortfall_energy.to_string(),
                    b.shortfall_hours_pct.to_string(),
                    b.mean_margin.to_string(),
                ])?;
            }
            w.flush()
        }
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, points)?;
            out.write_all(b"\n")
        }
    }
}

pub fn emit_report(points: &[SweepPoint], format: ReportFormat, path: impl AsRef<Path>) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_report(points, format, &mut buf)?;
    buf.flush()
}
