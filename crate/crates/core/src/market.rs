//! Receding-horizon loop: gate closures, plant simulation, settlement and
//! reserve compliance.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bidding::{self, BiddingError, MpcInputs, PlanOutputs};
use crate::domain::{BatteryParams, Config, HourRecord, MarginPolicy, MarketParams, PolicyKind, PriceSeries};
use crate::milp::SolverOptions;
use crate::sim::{Activation, BessState};

/// Energy checks accept deficits up to this size (MWh).
pub const COMPLIANCE_TOL: f64 = 1e-9;

const DAY: usize = 24;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("price series has {have} hours, run needs {need}")]
    PriceCoverage { have: usize, need: usize },
    #[error("hour {0} is already committed")]
    HourCommitted(usize),
    #[error("reserve block {0} is already committed")]
    BlockCommitted(usize),
    #[error("plan starting at hour {t0} does not cover hours {start}..{end}")]
    PlanCoverage { t0: usize, start: usize, end: usize },
    #[error("invalid configuration: {0}")]
    Config(#[from] crate::domain::ParamError),
    #[error(transparent)]
    Bidding(#[from] BiddingError),
}

/// Bids fixed at past gate closures.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MarketCommitments {
    pub da: BTreeMap<usize, f64>,
    pub fcr: BTreeMap<usize, f64>,
}

impl MarketCommitments {
    pub fn da_at(&self, hour: usize) -> Option<f64> {
        self.da.get(&hour).copied()
    }

    pub fn fcr_at(&self, block: usize) -> Option<f64> {
        self.fcr.get(&block).copied()
    }

    /// Delivery day whose gate closes at `clock`, if any.
    pub fn closing_day(clock: usize, gate_hour: usize) -> Option<usize> {
        (clock % DAY == gate_hour).then_some(clock / DAY + 1)
    }

    /// Freezes the plan's bids for the delivery day whose gate closes at
    /// `clock`. Returns whether anything was committed.
    pub fn gate_closure_update(
        &mut self,
        clock: usize,
        gate_hour: usize,
        plan: &PlanOutputs,
        block_len: usize,
    ) -> Result<bool, MarketError> {
        match Self::closing_day(clock, gate_hour) {
            Some(day) => self.commit_day(day, plan, block_len).map(|_| true),
            None => Ok(false),
        }
    }

    /// Commits all hours and reserve blocks of delivery day `day` from `plan`.
    pub fn commit_day(&mut self, day: usize, plan: &PlanOutputs, block_len: usize) -> Result<(), MarketError> {
        let start = day * DAY;
        let end = start + DAY;
        let covered = plan.t0 <= start && plan.t0 + plan.da_bid.len() >= end;
        if !covered {
            return Err(MarketError::PlanCoverage {
                t0: plan.t0,
                start,
                end,
            });
        }
        if let Some(h) = (start..end).find(|h| self.da.contains_key(h)) {
            return Err(MarketError::HourCommitted(h));
        }
        let blocks = start / block_len..end / block_len;
        if let Some(k) = blocks.clone().find(|k| self.fcr.contains_key(k)) {
            return Err(MarketError::BlockCommitted(k));
        }
        for h in start..end {
            self.da.insert(h, plan.da_bid[h - plan.t0]);
        }
        for k in blocks {
            self.fcr.insert(k, plan.fcr_bid[k - plan.first_block]);
        }
        Ok(())
    }

    /// Commits an all-zero day, used when no plan is available.
    pub fn commit_idle_day(&mut self, day: usize, block_len: usize) -> Result<(), MarketError> {
        let start = day * DAY;
        let plan = PlanOutputs {
            t0: start,
            p_cmd: 0.0,
            da_bid: vec![0.0; DAY],
            fcr_bid: vec![0.0; DAY / block_len],
            first_block: start / block_len,
            s: vec![],
            delta: vec![],
            objective: 0.0,
            status: crate::milp::Status::NoSolution,
            clamped: false,
        };
        self.commit_day(day, &plan, block_len)
    }
}

/// Dual-price settlement of an hour's imbalance (€ per hour of duration).
/// Surplus is sold below spot and deficit bought above it.
pub fn settle_imbalance(p_sched: f64, p_true: f64, pi_da: f64, mkt: &MarketParams) -> f64 {
    let p_imb = p_true - p_sched;
    if p_imb > 0.0 {
        (pi_da - mkt.imb_adder * pi_da.abs()) * p_imb
    } else if p_imb < 0.0 {
        (pi_da + mkt.imb_adder * pi_da.abs()) * p_imb
    } else {
        0.0
    }
}

/// Outcome of a reserve compliance check at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compliance {
    pub compliant: bool,
    pub energy_ok: bool,
    pub power_ok: bool,
    /// Worst-side energy deficit (MWh).
    pub shortfall: f64,
}

/// Whether the true state can sustain a full activation of `p_fcr` for the
/// activation duration in both directions, with `p_true` already dispatched.
pub fn evaluate_fcr_compliance(
    s_true: f64,
    p_fcr: f64,
    p_true: f64,
    battery: &BatteryParams,
    mkt: &MarketParams,
) -> Compliance {
    let need = mkt.dt_fcr * p_fcr;
    let down = (s_true - battery.s_min) * battery.capacity * battery.eta_dis;
    let up = (battery.s_max - s_true) * battery.capacity / battery.eta_ch;
    let shortfall = (need - down).max(need - up).max(0.0);
    let energy_ok = shortfall <= COMPLIANCE_TOL;
    let power_ok = p_true.abs() <= battery.rated_power - p_fcr + COMPLIANCE_TOL;
    Compliance {
        compliant: energy_ok && power_ok,
        energy_ok,
        power_ok,
        shortfall: if energy_ok { 0.0 } else { shortfall },
    }
}

/// Reserve the true state could actually sustain (MW).
fn deliverable_fcr(s: f64, p_fcr: f64, p_true: f64, battery: &BatteryParams, mkt: &MarketParams) -> f64 {
    let down = (s - battery.s_min) * battery.capacity * battery.eta_dis / mkt.dt_fcr;
    let up = (battery.s_max - s) * battery.capacity / battery.eta_ch / mkt.dt_fcr;
    let power = (battery.rated_power - p_true.abs()).max(0.0);
    p_fcr.min(down).min(up).min(power).max(0.0)
}

/// Complete record of one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationLog {
    pub config: Config,
    pub seed: u64,
    pub records: Vec<HourRecord>,
}

/// CSV header: field names with units.
pub const LOG_HEADER: [&str; 26] = [
    "t_h",
    "pi_da_eur_per_mwh",
    "p_da_bid_mw",
    "p_fcr_bid_mw",
    "p_fcr_delivered_mw",
    "p_cmd_mw",
    "p_true_mw",
    "p_true_ch_mw",
    "p_true_dis_mw",
    "p_imb_true_mw",
    "s_true_begin",
    "s_true_end",
    "s_rep",
    "w",
    "w_end",
    "margin_m",
    "r_dam_eur",
    "r_fcr_eur",
    "c_imb_eur",
    "c_deg_eur",
    "compliant",
    "power_ok",
    "shortfall_mwh",
    "clamped",
    "solver_status",
    "seed",
];

impl SimulationLog {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LOG_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.t.to_string(),
                r.pi_da.to_string(),
                r.p_da_bid.to_string(),
                r.p_fcr_bid.to_string(),
                r.p_fcr_delivered.to_string(),
                r.p_cmd.to_string(),
                r.p_true.to_string(),
                r.p_true_ch.to_string(),
                r.p_true_dis.to_string(),
                r.p_imb_true.to_string(),
                r.s_true_begin.to_string(),
                r.s_true_end.to_string(),
                r.s_rep.to_string(),
                r.w.to_string(),
                r.w_end.to_string(),
                r.margin_m.to_string(),
                r.r_dam.to_string(),
                r.r_fcr.to_string(),
                r.c_imb.to_string(),
                r.c_deg.to_string(),
                r.compliant.to_string(),
                r.power_ok.to_string(),
                r.shortfall.to_string(),
                r.clamped.to_string(),
                r.solver_status.clone(),
                self.seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("log serializes")
    }
}

/// Runs the closed loop with `pol` replacing the configured policy.
pub fn run_receding_horizon(
    config: &Config,
    prices: &PriceSeries,
    pol: &MarginPolicy,
    seed: u64,
) -> Result<SimulationLog, MarketError> {
    run_receding_horizon_observed(config, prices, pol, seed, |_| {})
}

/// As [`run_receding_horizon`], handing every optimizer input to `observe`
/// before the solve.
pub fn run_receding_horizon_observed(
    config: &Config,
    prices: &PriceSeries,
    pol: &MarginPolicy,
    seed: u64,
    mut observe: impl FnMut(&MpcInputs),
) -> Result<SimulationLog, MarketError> {
    let mut config = *config;
    config.policy = *pol;
    config.validate()?;
    let battery = config.battery;
    let err = config.soc_error;
    let mkt = config.market;
    let sim = config.sim;
    let horizon = sim.horizon;
    let len = mkt.fcr_block_len;

    let need = sim.hours + horizon;
    if prices.len() < need {
        return Err(MarketError::PriceCoverage {
            have: prices.len(),
            need,
        });
    }
    let opts = SolverOptions {
        node_limit: sim.node_limit,
        time_limit: Duration::from_secs_f64(sim.time_limit_s),
        ..SolverOptions::default()
    };

    let mut state = BessState::new(battery.s_init, sim.w_init, seed);
    let mut commitments = MarketCommitments::default();
    let mut records = Vec::with_capacity(sim.hours);
    // Tracked margin (adaptive) or tube size (uncertainty-aware).
    let mut margin = match pol.kind {
        PolicyKind::None | PolicyKind::Adaptive | PolicyKind::UncertaintyAware => 0.0,
        PolicyKind::Fixed => pol.m_fixed,
    };
    let mut s_rep_prev: Option<f64> = None;

    for t in 0..sim.hours {
        let s_rep = state.reported_soc();
        if let Some(prev) = s_rep_prev {
            if matches!(pol.kind, PolicyKind::Adaptive | PolicyKind::UncertaintyAware) {
                margin = bidding::margin_update_adaptive(margin, prev, pol, &err);
            }
        }

        let first_block = t / len;
        let last_block = (t + horizon - 1) / len;
        let inputs = MpcInputs {
            t0: t,
            horizon,
            s_rep_0: s_rep,
            pi_da: prices.pi_da[t..t + horizon].to_vec(),
            pi_fcr: vec![mkt.pi_fcr; horizon],
            committed_da: (t..t + horizon).map(|h| commitments.da_at(h)).collect(),
            committed_fcr: (first_block..=last_block).map(|k| commitments.fcr_at(k)).collect(),
            margin: match pol.kind {
                PolicyKind::None => vec![0.0; horizon],
                PolicyKind::UncertaintyAware => vec![],
                PolicyKind::Fixed | PolicyKind::Adaptive => vec![margin; horizon],
            },
            delta_0: if pol.kind == PolicyKind::UncertaintyAware {
                margin
            } else {
                0.0
            },
            kind: pol.kind,
        };
        observe(&inputs);
        let outcome = bidding::plan(&inputs, &battery, &mkt, pol, &err, &opts);

        // Day 0 has no earlier gate; it is committed from the first plan.
        let mut closing: Vec<usize> = Vec::new();
        if t == 0 {
            closing.push(0);
        }
        if let Some(day) = MarketCommitments::closing_day(t, sim.gate_hour) {
            if !closing.contains(&day) {
                closing.push(day);
            }
        }

        let (p_cmd, status, clamped) = match outcome {
            Ok(plan) => {
                for &day in &closing {
                    commitments.commit_day(day, &plan, len)?;
                }
                (plan.p_cmd, plan.status.as_str().to_string(), plan.clamped)
            }
            Err(BiddingError::FallbackRequired(status)) => {
                log::warn!("hour {t}: no plan ({status}), holding at zero");
                for &day in &closing {
                    commitments.commit_idle_day(day, len)?;
                }
                (0.0, status.to_string(), false)
            }
            Err(BiddingError::Solve(e)) => {
                log::warn!("hour {t}: solver failure ({e}), holding at zero");
                for &day in &closing {
                    commitments.commit_idle_day(day, len)?;
                }
                (0.0, "solver_error".to_string(), false)
            }
            Err(e) => return Err(e.into()),
        };

        let p_da = commitments.da_at(t).unwrap_or(0.0);
        let p_fcr = commitments.fcr_at(first_block).unwrap_or(0.0);
        let activation = (sim.activation_std > 0.0 || sim.activation_throughput > 0.0).then_some(Activation {
            p_fcr,
            std: sim.activation_std,
            throughput: sim.activation_throughput,
        });
        let (next, step) = state.simulate_hour_with(p_cmd, activation, &battery, &err);
        state = next;

        let p_true = step.realized.p_true;
        let pi = prices.pi_da[t];
        let begin = evaluate_fcr_compliance(step.s_true_begin, p_fcr, p_true, &battery, &mkt);
        let end = evaluate_fcr_compliance(step.s_true_end, p_fcr, p_true, &battery, &mkt);
        let s_worst = if begin.shortfall >= end.shortfall {
            step.s_true_begin
        } else {
            step.s_true_end
        };

        records.push(HourRecord {
            t,
            pi_da: pi,
            p_da_bid: p_da,
            p_fcr_bid: p_fcr,
            p_fcr_delivered: deliverable_fcr(s_worst, p_fcr, p_true, &battery, &mkt),
            p_cmd,
            p_true,
            p_true_ch: step.realized.p_true_ch,
            p_true_dis: step.realized.p_true_dis,
            p_imb_true: p_true - p_da,
            s_true_begin: step.s_true_begin,
            s_true_end: step.s_true_end,
            s_rep,
            w: step.w_begin,
            w_end: step.w_end,
            margin_m: match pol.kind {
                PolicyKind::None => 0.0,
                _ => margin,
            },
            r_dam: battery.dt * pi * p_da,
            r_fcr: battery.dt * mkt.pi_fcr * p_fcr,
            c_imb: battery.dt * settle_imbalance(p_da, p_true, pi, &mkt),
            c_deg: battery.dt * mkt.c_deg * step.realized.p_true_dis,
            compliant: begin.compliant && end.compliant,
            power_ok: begin.power_ok,
            shortfall: begin.shortfall.max(end.shortfall),
            clamped,
            solver_status: status,
        });
        s_rep_prev = Some(s_rep);
    }

    Ok(SimulationLog { config, seed, records })
}
