//! The hourly MPC problem: battery dynamics, market coupling, reserve
//! buffers and the state-of-charge tightening policies.

use thiserror::Error;

use crate::domain::{BatteryParams, MarginPolicy, MarketParams, PolicyKind, SocErrorParams};
use crate::milp::{
    solve_milp, MilpSolution, Model, ModelError, Relation, Sense, SolveError, SolverOptions, Status, VarId,
};

/// Objective weight on the planned tube size. Keeps `delta` on its lower
/// envelope without measurably changing the plan's value.
const DELTA_WEIGHT: f64 = 1e-4;

/// Everything the optimizer sees at one solve. There is deliberately no true
/// SOC in here: the plan starts from the reported value.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcInputs {
    /// Absolute hour of the first planned step.
    pub t0: usize,
    pub horizon: usize,
    /// Reported SOC at `t0`.
    pub s_rep_0: f64,
    /// Day-ahead prices over the horizon (€/MWh).
    pub pi_da: Vec<f64>,
    /// Reserve capacity prices over the horizon (€/MW/h).
    pub pi_fcr: Vec<f64>,
    /// Day-ahead schedule fixed at earlier gate closures, per horizon step.
    pub committed_da: Vec<Option<f64>>,
    /// Reserve bids fixed at earlier gate closures, per horizon block.
    pub committed_fcr: Vec<Option<f64>>,
    /// Tightening `m_t` per step; ignored by the tube policy.
    pub margin: Vec<f64>,
    /// Plant-side tube size the planned tube starts from.
    pub delta_0: f64,
    pub kind: PolicyKind,
}

impl MpcInputs {
    /// Index of the reserve block holding absolute hour `t0`.
    pub fn first_block(&self, block_len: usize) -> usize {
        self.t0 / block_len
    }

    /// Number of reserve blocks touched by the horizon.
    pub fn num_blocks(&self, block_len: usize) -> usize {
        if self.horizon == 0 {
            return 0;
        }
        (self.t0 + self.horizon - 1) / block_len - self.t0 / block_len + 1
    }

    /// Horizon block index of step `k`.
    pub fn block_of(&self, k: usize, block_len: usize) -> usize {
        (self.t0 + k) / block_len - self.t0 / block_len
    }

    fn check(&self, battery: &BatteryParams, block_len: usize) -> Result<(), BiddingError> {
        let t = self.horizon;
        if t == 0 {
            return Err(BiddingError::InvalidInputs("horizon must be at least 1"));
        }
        if self.pi_da.len() != t || self.pi_fcr.len() != t || self.committed_da.len() != t {
            return Err(BiddingError::InvalidInputs("per-step vectors must have horizon length"));
        }
        if self.kind != PolicyKind::UncertaintyAware && self.margin.len() != t {
            return Err(BiddingError::InvalidInputs("margin schedule must have horizon length"));
        }
        if self.committed_fcr.len() != self.num_blocks(block_len) {
            return Err(BiddingError::InvalidInputs("one reserve entry per block expected"));
        }
        let p = battery.rated_power;
        if self.committed_da.iter().flatten().any(|v| !(-p..=p).contains(v)) {
            return Err(BiddingError::InvalidInputs(
                "committed day-ahead bid outside rated power",
            ));
        }
        if self.committed_fcr.iter().flatten().any(|v| !(0.0..=p).contains(v)) {
            return Err(BiddingError::InvalidInputs("committed reserve bid outside rated power"));
        }
        if !self.s_rep_0.is_finite() || self.pi_da.iter().chain(&self.pi_fcr).any(|v| !v.is_finite()) {
            return Err(BiddingError::InvalidInputs("non-finite input"));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BiddingError {
    #[error("invalid MPC inputs: {0}")]
    InvalidInputs(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("no usable plan (solver status {0}); fallback required")]
    FallbackRequired(&'static str),
}

/// Variable handles of a built problem.
#[derive(Debug, Clone)]
pub struct MpcHandles {
    pub p_ch: Vec<VarId>,
    pub p_dis: Vec<VarId>,
    pub p_da: Vec<VarId>,
    pub imb_pos: Vec<Option<VarId>>,
    pub imb_neg: Vec<Option<VarId>>,
    /// `T + 1` planned SOC values, `s[0]` fixed.
    pub s: Vec<VarId>,
    pub fcr_bid: Vec<VarId>,
    /// Delivered reserve per block; same handle as the bid when uncommitted.
    pub fcr: Vec<VarId>,
    pub fcr_short: Vec<Option<VarId>>,
    /// Planned tube sizes (`T + 1`) for the tube policy.
    pub delta: Option<Vec<VarId>>,
}

/// A built MPC instance.
#[derive(Debug, Clone)]
pub struct MpcProblem {
    pub model: Model,
    pub handles: MpcHandles,
    /// Initial SOC actually used after clamping into the tightened box.
    pub s0: f64,
    pub clamped: bool,
}

/// Result of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutputs {
    /// Absolute hour of the first planned step.
    pub t0: usize,
    /// First-hour signed command (MW, discharge positive).
    pub p_cmd: f64,
    /// Planned day-ahead schedule per step.
    pub da_bid: Vec<f64>,
    /// Planned reserve bid per horizon block.
    pub fcr_bid: Vec<f64>,
    /// Absolute index of `fcr_bid[0]`'s block.
    pub first_block: usize,
    pub s: Vec<f64>,
    /// Planned tube (tube policy) or the applied margin schedule.
    pub delta: Vec<f64>,
    pub objective: f64,
    pub status: Status,
    pub clamped: bool,
}

/// Constant schedule for the fixed policy.
pub fn margin_schedule_fixed(pol: &MarginPolicy, horizon: usize) -> Vec<f64> {
    vec![pol.m_fixed; horizon]
}

/// One step of the adaptive margin recursion.
pub fn margin_update_adaptive(m_prev: f64, s_prev: f64, pol: &MarginPolicy, err: &SocErrorParams) -> f64 {
    let next = if err.b < s_prev && s_prev < err.c {
        m_prev + pol.w_bar
    } else {
        pol.gamma * m_prev
    };
    next.clamp(0.0, pol.delta_max)
}

/// Builds the MPC model for `inputs`.
pub fn build_mpc_problem(
    inputs: &MpcInputs,
    battery: &BatteryParams,
    mkt: &MarketParams,
    pol: &MarginPolicy,
    err: &SocErrorParams,
) -> Result<MpcProblem, BiddingError> {
    let len = mkt.fcr_block_len;
    inputs.check(battery, len)?;
    let t_len = inputs.horizon;
    let nb = inputs.num_blocks(len);
    let p_max = battery.rated_power;
    let dt = battery.dt;
    let tube = inputs.kind == PolicyKind::UncertaintyAware;

    let mut m = Model::new(Sense::Maximize);

    // Initial margin decides the box the reported SOC is clamped into.
    let m0 = if tube { inputs.delta_0 } else { inputs.margin[0] };
    let lo = battery.s_min + m0;
    let hi = battery.s_max - m0;
    let s0 = if lo <= hi {
        inputs.s_rep_0.clamp(lo, hi)
    } else {
        inputs.s_rep_0.clamp(battery.s_min, battery.s_max)
    };
    let clamped = s0 != inputs.s_rep_0;

    let mut s = Vec::with_capacity(t_len + 1);
    s.push(m.add_variable("s0", s0, s0, false)?);
    for t in 1..=t_len {
        s.push(m.add_variable(format!("s{t}"), battery.s_min, battery.s_max, false)?);
    }

    let mut fcr_bid = Vec::with_capacity(nb);
    let mut fcr = Vec::with_capacity(nb);
    let mut fcr_short = Vec::with_capacity(nb);
    for k in 0..nb {
        let hours = (0..t_len).filter(|&t| inputs.block_of(t, len) == k).count() as f64;
        let price: f64 = (0..t_len)
            .filter(|&t| inputs.block_of(t, len) == k)
            .map(|t| inputs.pi_fcr[t])
            .sum();
        match inputs.committed_fcr[k] {
            Some(bid) => {
                let b = m.add_variable(format!("fcr_bid{k}"), bid, bid, false)?;
                let d = m.add_variable(format!("fcr{k}"), 0.0, bid, false)?;
                let sh = m.add_variable(format!("fcr_short{k}"), 0.0, bid, false)?;
                m.add_constraint(&[(d, 1.0), (sh, 1.0), (b, -1.0)], Relation::Eq, 0.0)?;
                m.set_objective_coeff(b, dt * price);
                m.set_objective_coeff(d, -dt * hours * mkt.c_deg * mkt.zeta);
                m.set_objective_coeff(sh, -dt * hours * mkt.c_fcr);
                fcr_bid.push(b);
                fcr.push(d);
                fcr_short.push(Some(sh));
            }
            None => {
                let b = m.add_variable(format!("fcr_bid{k}"), 0.0, p_max, false)?;
                m.set_objective_coeff(b, dt * (price - hours * mkt.c_deg * mkt.zeta));
                fcr_bid.push(b);
                fcr.push(b);
                fcr_short.push(None);
            }
        }
    }

    let delta = if tube {
        let mut d = Vec::with_capacity(t_len + 1);
        d.push(m.add_variable("delta0", inputs.delta_0, inputs.delta_0, false)?);
        for t in 1..=t_len {
            // The cap is relaxed by the growth allowance so a plateau plan
            // starting at the cap stays feasible.
            let ub = pol.delta_max.max(inputs.delta_0) + t as f64 * pol.w_bar;
            let v = m.add_variable(format!("delta{t}"), 0.0, ub, false)?;
            m.set_objective_coeff(v, -DELTA_WEIGHT);
            d.push(v);
        }
        Some(d)
    } else {
        None
    };

    let up_coef = battery.eta_ch * mkt.dt_fcr / battery.capacity;
    let down_coef = mkt.dt_fcr / (battery.eta_dis * battery.capacity);

    let mut p_ch = Vec::with_capacity(t_len);
    let mut p_dis = Vec::with_capacity(t_len);
    let mut p_da = Vec::with_capacity(t_len);
    let mut imb_pos = Vec::with_capacity(t_len);
    let mut imb_neg = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let ch = m.add_variable(format!("p_ch{t}"), 0.0, p_max, false)?;
        let dis = m.add_variable(format!("p_dis{t}"), 0.0, p_max, false)?;
        let (da_lo, da_hi) = match inputs.committed_da[t] {
            Some(v) => (v, v),
            None => (-p_max, p_max),
        };
        let da = m.add_variable(format!("p_da{t}"), da_lo, da_hi, false)?;
        m.set_objective_coeff(da, dt * inputs.pi_da[t]);
        m.set_objective_coeff(dis, -dt * mkt.c_deg);

        let mut coupling = vec![(dis, 1.0), (ch, -1.0), (da, -1.0)];
        let (ip, ineg) = if inputs.committed_da[t].is_some() {
            let ip = m.add_variable(format!("imb_pos{t}"), 0.0, 2.0 * p_max, false)?;
            let ineg = m.add_variable(format!("imb_neg{t}"), 0.0, 2.0 * p_max, false)?;
            m.set_objective_coeff(ip, -dt * mkt.c_imb);
            m.set_objective_coeff(ineg, -dt * mkt.c_imb);
            coupling.push((ip, -1.0));
            coupling.push((ineg, 1.0));
            (Some(ip), Some(ineg))
        } else {
            (None, None)
        };
        m.add_constraint(&coupling, Relation::Eq, 0.0)?;

        if inputs.pi_da[t] < 0.0 {
            let z = m.add_variable(format!("z{t}"), 0.0, 1.0, true)?;
            m.add_constraint(&[(ch, 1.0), (z, -p_max)], Relation::Le, 0.0)?;
            m.add_constraint(&[(dis, 1.0), (z, p_max)], Relation::Le, p_max)?;
        }

        let f = fcr[inputs.block_of(t, len)];
        m.add_constraint(&[(ch, 1.0), (f, 1.0)], Relation::Le, p_max)?;
        m.add_constraint(&[(dis, 1.0), (f, 1.0)], Relation::Le, p_max)?;

        m.add_constraint(
            &[
                (s[t + 1], 1.0),
                (s[t], -1.0),
                (ch, -dt * battery.eta_ch / battery.capacity),
                (dis, dt / (battery.eta_dis * battery.capacity)),
            ],
            Relation::Eq,
            0.0,
        )?;

        // Reserve energy buffers at both ends of the step.
        match &delta {
            Some(d) => {
                for &st in &[s[t], s[t + 1]] {
                    m.add_constraint(&[(st, 1.0), (f, up_coef), (d[t], 1.0)], Relation::Le, battery.s_max)?;
                    m.add_constraint(&[(st, 1.0), (f, -down_coef), (d[t], -1.0)], Relation::Ge, battery.s_min)?;
                }
            }
            None => {
                let mt = inputs.margin[t];
                // Skip the start-of-step row when the previous step already
                // imposed the identical one.
                let repeat =
                    t > 0 && inputs.block_of(t - 1, len) == inputs.block_of(t, len) && inputs.margin[t - 1] == mt;
                let ends: &[VarId] = if repeat { &s[t + 1..t + 2] } else { &s[t..t + 2] };
                for &st in ends {
                    m.add_constraint(&[(st, 1.0), (f, up_coef)], Relation::Le, battery.s_max - mt)?;
                    m.add_constraint(&[(st, 1.0), (f, -down_coef)], Relation::Ge, battery.s_min + mt)?;
                }
            }
        }

        p_ch.push(ch);
        p_dis.push(dis);
        p_da.push(da);
        imb_pos.push(ip);
        imb_neg.push(ineg);
    }

    if let Some(d) = &delta {
        encode_uncertainty_aware(&mut m, &s, d, pol, err, battery)?;
    }

    Ok(MpcProblem {
        model: m,
        handles: MpcHandles {
            p_ch,
            p_dis,
            p_da,
            imb_pos,
            imb_neg,
            s,
            fcr_bid,
            fcr,
            fcr_short,
            delta,
        },
        s0,
        clamped,
    })
}

/// Adds the regime logic of the planned tube: binaries `u_t` (SOC at or
/// below `b`) and `v_t` (at or above `c`), and lower bounds that make
/// `delta` grow on the plateau and decay outside it.
pub fn encode_uncertainty_aware(
    model: &mut Model,
    s: &[VarId],
    delta: &[VarId],
    pol: &MarginPolicy,
    err: &SocErrorParams,
    battery: &BatteryParams,
) -> Result<(), ModelError> {
    let steps = s.len() - 1;
    let big = pol.w_bar + pol.delta_max;
    for t in 0..steps {
        let u = model.add_variable(format!("u{t}"), 0.0, 1.0, true)?;
        let v = model.add_variable(format!("v{t}"), 0.0, 1.0, true)?;
        model.add_constraint(&[(u, 1.0), (v, 1.0)], Relation::Le, 1.0)?;
        // s_t <= b + (1 - u)(s_max - b)
        model.add_constraint(&[(s[t], 1.0), (u, battery.s_max - err.b)], Relation::Le, battery.s_max)?;
        // s_t >= c - (1 - v)(c - s_min)
        model.add_constraint(
            &[(s[t], 1.0), (v, -(err.c - battery.s_min))],
            Relation::Ge,
            battery.s_min,
        )?;
        model.add_constraint(&[(delta[t + 1], 1.0), (delta[t], -pol.gamma)], Relation::Ge, 0.0)?;
        model.add_constraint(
            &[(delta[t + 1], 1.0), (delta[t], -1.0), (u, big), (v, big)],
            Relation::Ge,
            pol.w_bar,
        )?;
    }
    Ok(())
}

/// Reads the plan out of a solution.
pub fn extract_plan(
    solution: &MilpSolution,
    problem: &MpcProblem,
    inputs: &MpcInputs,
    block_len: usize,
) -> Result<PlanOutputs, BiddingError> {
    if !solution.status.has_solution() {
        return Err(BiddingError::FallbackRequired(solution.status.as_str()));
    }
    let h = &problem.handles;
    let x = |v: VarId| solution.value(v);
    // Bids become commitments, so keep them inside their bounds exactly.
    let bounded = |v: VarId| {
        let var = &problem.model.vars()[v.0];
        x(v).clamp(var.lb, var.ub)
    };
    let p_cmd = x(h.p_dis[0]) - x(h.p_ch[0]);
    let fcr_bid = h
        .fcr_bid
        .iter()
        .zip(&inputs.committed_fcr)
        .map(|(&v, c)| c.unwrap_or_else(|| bounded(v)))
        .collect();
    let da_bid = h
        .p_da
        .iter()
        .zip(&inputs.committed_da)
        .map(|(&v, c)| c.unwrap_or_else(|| bounded(v)))
        .collect();
    let delta = match &h.delta {
        Some(d) => d.iter().map(|&v| x(v)).collect(),
        None => inputs.margin.clone(),
    };
    Ok(PlanOutputs {
        t0: inputs.t0,
        p_cmd,
        da_bid,
        fcr_bid,
        first_block: inputs.first_block(block_len),
        s: h.s.iter().map(|&v| x(v)).collect(),
        delta,
        objective: solution.objective,
        status: solution.status,
        clamped: problem.clamped,
    })
}

/// Builds, solves and extracts in one go.
pub fn plan(
    inputs: &MpcInputs,
    battery: &BatteryParams,
    mkt: &MarketParams,
    pol: &MarginPolicy,
    err: &SocErrorParams,
    opts: &SolverOptions,
) -> Result<PlanOutputs, BiddingError> {
    let problem = build_mpc_problem(inputs, battery, mkt, pol, err)?;
    let solution = solve_milp(&problem.model, opts)?;
    extract_plan(&solution, &problem, inputs, mkt.fcr_block_len)
}
