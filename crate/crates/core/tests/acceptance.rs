//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.
//!
//! Closed-loop criteria use a shared scenario: 30 days of default synthetic
//! prices (seed 1) with reserve activation throughput 0.3. The no-tightening
//! failure mode runs on a low-arbitrage price regime where day-ahead trades
//! are rare, so the error is seldom recalibrated.

use std::io::Write;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bessmpc_core::bidding::MpcInputs;
use bessmpc_core::domain::{
    BatteryParams, Config, HourRecord, MarginPolicy, MarketParams, PolicyKind, PriceSeries, SocErrorParams,
};
use bessmpc_core::ingest::{synth_prices, SyntheticPriceParams};
use bessmpc_core::market::{run_receding_horizon, run_receding_horizon_observed, SimulationLog};
use bessmpc_core::metrics::{
    compute_revenue, sweep, total, write_report, Grid, ReportFormat, SweepAxis, SweepPoint, SweepResult,
};
use bessmpc_core::milp::{solve_milp, Model, Relation, Sense, SolverOptions, Status, VarId};
use bessmpc_core::sim::{scaling_factor, step_error, step_true_soc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned thresholds.
const ERROR_SUITE_BUDGET: Duration = Duration::from_secs(1);
const STEP_ERROR_TOL: f64 = 1e-12;
const CLIP_TOL: f64 = 1e-9;
const PLANT_STEPS: usize = 100_000;
const ORACLE_MODELS: usize = 200;
const ORACLE_MAX_INTS: usize = 12;
const ORACLE_TOL: f64 = 1e-6;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const ROBUST_SEEDS: u64 = 10;
const SATURATED_SHORTFALL_MIN: f64 = 0.5;
const COMPLIANCE_MIN_PCT: f64 = 96.0;
const COVERAGE_MIN: f64 = 0.96;
const DETERMINISM_DAYS: usize = 14;
const DETERMINISM_BUDGET: Duration = Duration::from_secs(600);

const SCENARIO_DAYS: usize = 30;
const SCENARIO_THROUGHPUT: f64 = 0.3;
const TUNING_SEEDS: [u64; 3] = [1, 2, 3];
const FIXED_GRID: &str = "0:0.2:0.02";
const ADAPTIVE_GRID: &str = "1e-4:1.9e-3:3e-4";
const TUBE_GRID: &str = "3e-4:9e-4:3e-4";

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn prices_for(cfg: &Config, params: SyntheticPriceParams) -> PriceSeries {
    let days = (cfg.sim.hours + cfg.sim.horizon).div_ceil(24);
    synth_prices(&SyntheticPriceParams { days, ..params }).expect("valid synthetic parameters")
}

fn scenario(days: usize) -> (Config, PriceSeries) {
    let mut cfg = Config::default();
    cfg.sim.hours = days * 24;
    cfg.sim.activation_throughput = SCENARIO_THROUGHPUT;
    let prices = prices_for(
        &cfg,
        SyntheticPriceParams {
            seed: 1,
            ..Default::default()
        },
    );
    (cfg, prices)
}

fn policy(kind: PolicyKind, value: f64) -> MarginPolicy {
    MarginPolicy {
        kind,
        ..MarginPolicy::default()
    }
    .with_parameter(value)
}

// ---------------------------------------------------------------------------
// 1. Error model

fn piecewise(s: f64, b: f64, c: f64) -> f64 {
    if s <= b {
        s / b
    } else if s <= c {
        1.0
    } else {
        (1.0 - s) / (1.0 - c)
    }
}

fn error_model() -> Verdict {
    let start = Instant::now();
    let err = SocErrorParams::default();
    let bat = BatteryParams::default();
    let (b, c) = (err.b, err.c);
    let points = [0.0, b / 2.0, b, (b + c) / 2.0, c, (1.0 + c) / 2.0, 1.0];
    let nominal = [0.0, 0.5, 1.0, 1.0, 1.0, 0.5, 0.0];
    for (s, want) in points.iter().zip(nominal) {
        let got = scaling_factor(*s, &err);
        if (got - piecewise(*s, b, c)).abs() > STEP_ERROR_TOL || (got - want).abs() > STEP_ERROR_TOL {
            return verdict(false, format!("a({s}) = {got}"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let w = rng.random_range(-0.2..=0.2);
        let s = rng.random_range(0.0..=1.0);
        let p = rng.random_range(-10.0..=10.0);
        let eta = rng.random_range(-0.05..0.05);
        let a = piecewise(s, b, c);
        let scalar = (a * (w + f64::abs(p) / bat.rated_power * eta)).clamp(-err.w_max, err.w_max);
        worst = worst.max((step_error(w, s, p, eta, &bat, &err) - scalar).abs());
    }
    if worst > STEP_ERROR_TOL {
        return verdict(false, format!("step_error deviates by {worst:e}"));
    }

    let high = step_error(0.25, 0.5, 0.0, 0.0, &bat, &err);
    let low = step_error(-0.19, 0.5, 10.0, -0.05, &bat, &err);
    if high != err.w_max || low != -err.w_max {
        return verdict(false, format!("saturation gave {high} and {low}"));
    }
    let elapsed = start.elapsed();
    verdict(
        elapsed < ERROR_SUITE_BUDGET,
        format!("7 breakpoints exact, max step deviation {worst:e}, clamp ok, {elapsed:.2?}"),
    )
}

// ---------------------------------------------------------------------------
// 2. Plant

fn plant() -> Verdict {
    let bat = BatteryParams::default();
    // Headroom in MW: (1 - 0.5) C / (eta_ch dt) and 0.2 C eta_dis / dt.
    let charge = (bat.s_max - 0.5) * bat.capacity / (bat.eta_ch * bat.dt);
    let discharge = (0.2 - bat.s_min) * bat.capacity * bat.eta_dis / bat.dt;
    let (s_hi, up) = step_true_soc(0.5, -bat.rated_power, &bat);
    let (s_lo, down) = step_true_soc(0.2, bat.rated_power, &bat);
    let clip_ok = (up.p_true_ch - charge).abs() < CLIP_TOL
        && (up.p_true_ch - 5.050505050505).abs() < CLIP_TOL
        && (down.p_true_dis - discharge).abs() < CLIP_TOL
        && (down.p_true_dis - 1.98).abs() < CLIP_TOL
        && s_hi == bat.s_max
        && s_lo == bat.s_min;
    if !clip_ok {
        return verdict(false, format!("clip points {} / {}", up.p_true_ch, down.p_true_dis));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut s = bat.s_init;
    for k in 0..PLANT_STEPS {
        let cmd = rng.random_range(-15.0..=15.0);
        s = step_true_soc(s, cmd, &bat).0;
        if !(bat.s_min..=bat.s_max).contains(&s) {
            return verdict(false, format!("SOC {s} after step {k}"));
        }
    }
    verdict(
        true,
        format!(
            "charge clip {:.6} MW, discharge clip {:.6} MW, {PLANT_STEPS} steps in range",
            up.p_true_ch, down.p_true_dis
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. MILP against enumeration

struct RandomModel {
    sense: Sense,
    /// (lb, ub, integer)
    vars: Vec<(f64, f64, bool)>,
    cost: Vec<f64>,
    rows: Vec<(Vec<f64>, Relation, f64)>,
}

fn random_model(rng: &mut ChaCha8Rng) -> RandomModel {
    let n_int = rng.random_range(1..=ORACLE_MAX_INTS);
    let n_cont = rng.random_range(0..=2);
    let mut vars = Vec::new();
    for _ in 0..n_int {
        // Keep the enumeration small: wide ranges only on small models.
        let ub = if n_int <= 6 { rng.random_range(1..=3) } else { 1 } as f64;
        let lb = if rng.random_bool(0.2) { -1.0 } else { 0.0 };
        vars.push((lb, ub, true));
    }
    for _ in 0..n_cont {
        let lb = rng.random_range(-3.0f64..0.0).round();
        vars.push((lb, lb + rng.random_range(1.0f64..5.0).round(), false));
    }
    let n = vars.len();
    let cost = (0..n).map(|_| rng.random_range(-9..=9) as f64).collect();
    // Anchor point that the rows mostly admit.
    let anchor: Vec<f64> = vars.iter().map(|&(lo, hi, _)| ((lo + hi) / 2.0).floor()).collect();
    let mut rows = Vec::new();
    for _ in 0..rng.random_range(1..=5) {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-5..=5) as f64).collect();
        let at: f64 = a.iter().zip(&anchor).map(|(a, x)| a * x).sum();
        let rel = match rng.random_range(0..10) {
            0 => Relation::Eq,
            1..=5 => Relation::Le,
            _ => Relation::Ge,
        };
        let slack = rng.random_range(-2..=6) as f64;
        let rhs = match rel {
            Relation::Le => at + slack,
            Relation::Ge => at - slack,
            Relation::Eq => at,
        };
        rows.push((a, rel, rhs));
    }
    RandomModel {
        sense: if rng.random_bool(0.5) {
            Sense::Maximize
        } else {
            Sense::Minimize
        },
        vars,
        cost,
        rows,
    }
}

fn build_model(r: &RandomModel) -> Model {
    let mut m = Model::new(r.sense);
    let ids: Vec<VarId> = r
        .vars
        .iter()
        .enumerate()
        .map(|(j, &(lo, hi, int))| m.add_variable(format!("x{j}"), lo, hi, int).unwrap())
        .collect();
    for (v, c) in ids.iter().zip(&r.cost) {
        m.set_objective_coeff(*v, *c);
    }
    for (a, rel, rhs) in &r.rows {
        let terms: Vec<_> = ids.iter().copied().zip(a.iter().copied()).collect();
        m.add_constraint(&terms, *rel, *rhs).unwrap();
    }
    m
}

fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &k| a[i][col].abs().total_cmp(&a[k][col].abs()))?;
        if a[p][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        for i in 0..n {
            if i != col {
                let f = a[i][col] / a[col][col];
                for k in col..n {
                    a[i][k] -= f * a[col][k];
                }
                b[i] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Best objective by enumerating integer assignments and, for each, the
/// vertices of the (at most two-dimensional) continuous remainder.
fn enumerate(r: &RandomModel) -> Option<f64> {
    let ints: Vec<usize> = (0..r.vars.len()).filter(|&j| r.vars[j].2).collect();
    let conts: Vec<usize> = (0..r.vars.len()).filter(|&j| !r.vars[j].2).collect();
    let better = |a: f64, b: f64| match r.sense {
        Sense::Maximize => a > b,
        Sense::Minimize => a < b,
    };
    let feasible = |x: &[f64]| {
        r.vars
            .iter()
            .zip(x)
            .all(|(&(lo, hi, _), &v)| v >= lo - 1e-9 && v <= hi + 1e-9)
            && r.rows.iter().all(|(a, rel, rhs)| {
                let lhs: f64 = a.iter().zip(x).map(|(a, x)| a * x).sum();
                match rel {
                    Relation::Le => lhs <= rhs + 1e-9,
                    Relation::Ge => lhs >= rhs - 1e-9,
                    Relation::Eq => (lhs - rhs).abs() <= 1e-9,
                }
            })
    };
    let mut best: Option<f64> = None;
    let mut x = vec![0.0; r.vars.len()];
    let mut idx: Vec<f64> = ints.iter().map(|&j| r.vars[j].0).collect();
    loop {
        for (k, &j) in ints.iter().enumerate() {
            x[j] = idx[k];
        }
        // Candidate planes in the continuous coordinates: rows and bounds.
        let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
        for (a, _, rhs) in &r.rows {
            let fixed: f64 = ints.iter().map(|&j| a[j] * x[j]).sum();
            planes.push((conts.iter().map(|&j| a[j]).collect(), rhs - fixed));
        }
        for (k, &j) in conts.iter().enumerate() {
            let mut e = vec![0.0; conts.len()];
            e[k] = 1.0;
            planes.push((e.clone(), r.vars[j].0));
            planes.push((e, r.vars[j].1));
        }
        let mut try_point = |y: &[f64], x: &mut Vec<f64>| {
            for (k, &j) in conts.iter().enumerate() {
                x[j] = y[k];
            }
            if feasible(x) {
                let obj: f64 = r.cost.iter().zip(x.iter()).map(|(c, v)| c * v).sum();
                if best.is_none_or(|b| better(obj, b)) {
                    best = Some(obj);
                }
            }
        };
        match conts.len() {
            0 => try_point(&[], &mut x),
            1 => {
                for (a, rhs) in &planes {
                    if a[0].abs() > 1e-12 {
                        try_point(&[rhs / a[0]], &mut x);
                    }
                }
            }
            _ => {
                for i in 0..planes.len() {
                    for k in i + 1..planes.len() {
                        let m = vec![planes[i].0.clone(), planes[k].0.clone()];
                        if let Some(y) = gauss(m, vec![planes[i].1, planes[k].1]) {
                            try_point(&y, &mut x);
                        }
                    }
                }
            }
        }
        // Next assignment, odometer style.
        let mut k = 0;
        loop {
            if k == ints.len() {
                return best;
            }
            let j = ints[k];
            if idx[k] < r.vars[j].1 {
                idx[k] += 1.0;
                break;
            }
            idx[k] = r.vars[j].0;
            k += 1;
        }
    }
}

fn milp_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut infeasible = 0;
    for i in 0..ORACLE_MODELS {
        let r = random_model(&mut rng);
        let want = enumerate(&r);
        let got = solve_milp(&build_model(&r), &SolverOptions::default()).expect("solver runs");
        match want {
            None => {
                infeasible += 1;
                if got.status != Status::Infeasible {
                    return verdict(false, format!("model {i}: oracle infeasible, solver {:?}", got.status));
                }
            }
            Some(obj) => {
                if got.status != Status::Optimal {
                    return verdict(false, format!("model {i}: solver {:?}, oracle {obj}", got.status));
                }
                worst = worst.max((got.objective - obj).abs());
                if (got.objective - obj).abs() > ORACLE_TOL {
                    return verdict(false, format!("model {i}: solver {} vs oracle {obj}", got.objective));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        elapsed < ORACLE_BUDGET,
        format!("{ORACLE_MODELS} models ({infeasible} infeasible), max gap {worst:e}, {elapsed:.2?}"),
    )
}

// ---------------------------------------------------------------------------
// 4. Robust tightening

fn robust_margin() -> Verdict {
    let mut short_hours = 0usize;
    let mut hours = 0usize;
    for seed in 1..=ROBUST_SEEDS {
        let mut cfg = Config::default();
        cfg.sim.hours = SCENARIO_DAYS * 24;
        cfg.sim.activation_throughput = SCENARIO_THROUGHPUT;
        let prices = prices_for(
            &cfg,
            SyntheticPriceParams {
                seed,
                ..Default::default()
            },
        );
        let pol = policy(PolicyKind::Fixed, cfg.soc_error.w_max);
        let log = run_receding_horizon(&cfg, &prices, &pol, seed).expect("run completes");
        short_hours += log.records.iter().filter(|r| !r.compliant).count();
        hours += log.records.len();
    }
    verdict(
        short_hours == 0,
        format!("{short_hours} shortfall hours over {ROBUST_SEEDS} seeds x {SCENARIO_DAYS} days ({hours} h)"),
    )
}

// ---------------------------------------------------------------------------
// 5. No tightening

fn no_tightening() -> Verdict {
    let mut cfg = Config::default();
    cfg.sim.hours = 60 * 24;
    cfg.sim.activation_throughput = SCENARIO_THROUGHPUT;
    cfg.soc_error.beta = 1e-3;
    let prices = prices_for(
        &cfg,
        SyntheticPriceParams {
            seed: 1,
            morning_amplitude: 45.0,
            evening_amplitude: 82.5,
            midday_dip: 30.0,
            negative_prob: 0.005,
            ..Default::default()
        },
    );
    let log = run_receding_horizon(&cfg, &prices, &MarginPolicy::default(), 1).expect("run completes");
    let w_max = cfg.soc_error.w_max;
    let Some(first) = log.records.iter().position(|r| r.w.abs() >= w_max) else {
        let peak = log.records.iter().map(|r| r.w.abs()).fold(0.0, f64::max);
        return verdict(false, format!("error never saturated (peak |w| {peak:.4})"));
    };
    let after = &log.records[first..];
    let frac = after.iter().filter(|r| !r.compliant).count() as f64 / after.len() as f64;
    let energy = compute_revenue(&log, &cfg.market).shortfall_energy;
    verdict(
        frac > SATURATED_SHORTFALL_MIN && energy > 0.0,
        format!(
            "saturated at hour {first}, {:.1}% shortfall hours after, {energy:.1} MWh shortfall energy",
            100.0 * frac
        ),
    )
}

// ---------------------------------------------------------------------------
// 6, 7, 9. Tuned orderings

struct Tuning {
    none: SweepPoint,
    fixed: Option<SweepPoint>,
    adaptive: Option<SweepPoint>,
    tube: Option<SweepPoint>,
    results: Vec<SweepResult>,
    cfg: Config,
    prices: PriceSeries,
}

fn best_compliant(res: &SweepResult) -> Option<SweepPoint> {
    res.points
        .iter()
        .filter(|p| 100.0 - p.breakdown.shortfall_hours_pct >= COMPLIANCE_MIN_PCT)
        .max_by(|a, b| a.breakdown.r_total.total_cmp(&b.breakdown.r_total))
        .cloned()
}

fn tune() -> Tuning {
    let (cfg, prices) = scenario(SCENARIO_DAYS);
    let axis = |kind: PolicyKind, grid: &str| SweepAxis {
        kind,
        values: grid.parse::<Grid>().expect("pinned grid").points(),
    };
    let run = |a: SweepAxis| sweep(&cfg, &prices, &[a], &TUNING_SEEDS).expect("non-empty sweep");
    let none = run(SweepAxis {
        kind: PolicyKind::None,
        values: vec![0.0],
    });
    let fixed = run(axis(PolicyKind::Fixed, FIXED_GRID));
    let adaptive = run(axis(PolicyKind::Adaptive, ADAPTIVE_GRID));
    let tube = run(axis(PolicyKind::UncertaintyAware, TUBE_GRID));
    Tuning {
        none: none.points[0].clone(),
        fixed: best_compliant(&fixed),
        adaptive: best_compliant(&adaptive),
        tube: best_compliant(&tube),
        results: vec![none, fixed, adaptive, tube],
        cfg,
        prices,
    }
}

fn describe(name: &str, p: &Option<SweepPoint>) -> String {
    match p {
        Some(p) => format!(
            "{name}({}) R={:.0} short={:.2}% m={:.4}",
            p.parameter, p.breakdown.r_total, p.breakdown.shortfall_hours_pct, p.breakdown.mean_margin
        ),
        None => format!("{name}: no grid point reaches {COMPLIANCE_MIN_PCT}% compliance"),
    }
}

fn ordering(t: &Tuning) -> Verdict {
    let detail = format!(
        "none R={:.0}; {}; {}; {}",
        t.none.breakdown.r_total,
        describe("fixed", &t.fixed),
        describe("adaptive", &t.adaptive),
        describe("ua", &t.tube)
    );
    let (Some(f), Some(a), Some(u)) = (&t.fixed, &t.adaptive, &t.tube) else {
        return verdict(false, detail);
    };
    let r = |p: &SweepPoint| p.breakdown.r_total;
    let m = |p: &SweepPoint| p.breakdown.mean_margin;
    let revenue = r(&t.none) >= r(u) && r(u) >= r(a) && r(a) >= r(f);
    let margins = m(f) > m(a) && m(a) > m(u);
    verdict(revenue && margins, detail)
}

fn coverage(t: &Tuning) -> Verdict {
    let Some(u) = &t.tube else {
        return verdict(false, "no tuned uncertainty-aware point to check");
    };
    let pol = policy(PolicyKind::UncertaintyAware, u.parameter);
    let log = run_receding_horizon(&t.cfg, &t.prices, &pol, TUNING_SEEDS[0]).expect("run completes");
    let covered = log.records.iter().filter(|r| r.w.abs() <= r.margin_m).count();
    let frac = covered as f64 / log.records.len() as f64;
    verdict(
        frac >= COVERAGE_MIN,
        format!(
            "w_bar={} seed {}: |w| <= delta in {:.2}% of hours",
            u.parameter,
            TUNING_SEEDS[0],
            100.0 * frac
        ),
    )
}

fn hand_example() -> bool {
    let mut cfg = Config::default();
    cfg.market = MarketParams {
        pi_fcr: 16.0,
        c_deg: 36.5,
        ..cfg.market
    };
    let rec = HourRecord {
        t: 0,
        pi_da: 100.0,
        p_da_bid: 5.0,
        p_fcr_bid: 5.0,
        p_fcr_delivered: 5.0,
        p_cmd: 5.0,
        p_true: 5.0,
        p_true_ch: 0.0,
        p_true_dis: 5.0,
        p_imb_true: 0.0,
        s_true_begin: 0.5,
        s_true_end: 0.5 - 5.0 / (0.99 * 10.0),
        s_rep: 0.5,
        w: 0.0,
        w_end: 0.0,
        margin_m: 0.0,
        r_dam: 500.0,
        r_fcr: 80.0,
        c_imb: 0.0,
        c_deg: 182.5,
        compliant: true,
        power_ok: true,
        shortfall: 0.0,
        clamped: false,
        solver_status: "optimal".into(),
    };
    let log = SimulationLog {
        config: cfg,
        seed: 0,
        records: vec![rec],
    };
    let b = compute_revenue(&log, &cfg.market);
    b.r_dam == 500.0 && b.r_fcr == 80.0 && b.c_imb == 0.0 && b.c_deg == 182.5 && b.r_total == 397.5
}

fn revenue_identity(t: &Tuning) -> Verdict {
    if !hand_example() {
        return verdict(false, "single-hour example does not give 397.5");
    }
    let points: Vec<SweepPoint> = t.results.iter().flat_map(|r| r.points.iter().cloned()).collect();
    let mut csv = Vec::new();
    write_report(&points, ReportFormat::Csv, &mut csv).expect("in-memory write");
    let mut rows = 0;
    let mut reader = csv::Reader::from_reader(csv.as_slice());
    for row in reader.records() {
        let row = row.expect("own output parses");
        let v = |i: usize| row[i].parse::<f64>().expect("numeric column");
        if v(3) != total(v(4), v(5), v(6), v(7)) {
            return verdict(false, format!("row {rows} breaks the identity: {row:?}"));
        }
        rows += 1;
    }
    let runs = t.results.iter().flat_map(|r| &r.runs);
    let mut n_runs = 0;
    for run in runs {
        let b = &run.breakdown;
        if b.r_total != total(b.r_dam, b.r_fcr, b.c_imb, b.c_deg) {
            return verdict(false, format!("per-seed run {run:?} breaks the identity"));
        }
        n_runs += 1;
    }
    verdict(
        true,
        format!("397.5 example exact, {rows} report rows and {n_runs} per-seed rows exact"),
    )
}

// ---------------------------------------------------------------------------
// 8. Information barrier

fn information_barrier() -> Verdict {
    let (mut cfg, prices) = scenario(3);
    cfg.sim.hours = 48;
    let pol = policy(PolicyKind::Adaptive, 5e-4);
    let collect = |cfg: &Config| {
        let mut seen: Vec<MpcInputs> = Vec::new();
        let log = run_receding_horizon_observed(cfg, &prices, &pol, 7, |i| seen.push(i.clone())).expect("run");
        (seen, log)
    };
    let (base, log_a) = collect(&cfg);
    let mut doubled = cfg;
    doubled.soc_error.beta *= 2.0;
    let (other, log_b) = collect(&doubled);

    // The truth did change.
    let truth_moved = log_a
        .records
        .iter()
        .zip(&log_b.records)
        .any(|(a, b)| a.s_true_end != b.s_true_end || a.w_end != b.w_end);
    if !truth_moved {
        return verdict(false, "doubling the bias left the true trajectory unchanged");
    }
    // Every observed input must equal the reported SOC of its hour.
    for (inp, rec) in base.iter().zip(&log_a.records) {
        if inp.s_rep_0 != rec.s_rep {
            return verdict(false, format!("hour {}: optimizer SOC is not the reported SOC", rec.t));
        }
    }
    let Some(first) = base.iter().zip(&other).position(|(a, b)| a != b) else {
        return verdict(false, "inputs never changed although the reported SOC did");
    };
    let (a, b) = (&base[first], &other[first]);
    let mut masked = b.clone();
    masked.s_rep_0 = a.s_rep_0;
    let s_true_changed_earlier = log_a.records[..first]
        .iter()
        .zip(&log_b.records[..first])
        .any(|(x, y)| x.s_true_end != y.s_true_end || x.w_end != y.w_end);
    verdict(
        a.s_rep_0 != b.s_rep_0 && *a == masked,
        format!(
            "first input change at hour {first} is in s_rep only (truth already differed earlier: {s_true_changed_earlier})"
        ),
    )
}

// ---------------------------------------------------------------------------
// 10. Determinism and runtime

fn determinism() -> Verdict {
    let (cfg, prices) = scenario(DETERMINISM_DAYS);
    let pol = policy(PolicyKind::UncertaintyAware, 1.8e-4);
    let start = Instant::now();
    let a = run_receding_horizon(&cfg, &prices, &pol, 42).expect("run completes");
    let first = start.elapsed();
    let b = run_receding_horizon(&cfg, &prices, &pol, 42).expect("run completes");
    let same = a == b && a.to_json() == b.to_json();
    verdict(
        same && first < DETERMINISM_BUDGET,
        format!(
            "{DETERMINISM_DAYS}-day T={} run in {first:.1?}, repeat identical: {same}",
            cfg.sim.horizon
        ),
    )
}

fn report(id: u8, name: &str, v: &Verdict) {
    let mut out = std::io::stdout().lock();
    let tag = if v.pass { "PASS" } else { "FAIL" };
    writeln!(out, "criterion {id:>2} {tag}  {name}: {}", v.detail).unwrap();
    out.flush().unwrap();
}

fn main() -> ExitCode {
    let mut all = true;
    let mut check = |id: u8, name: &str, v: Verdict| {
        report(id, name, &v);
        all &= v.pass;
    };
    check(1, "error model", error_model());
    check(2, "plant", plant());
    check(3, "MILP vs enumeration", milp_oracle());
    check(4, "robust fixed margin", robust_margin());
    check(5, "no tightening", no_tightening());
    check(8, "information barrier", information_barrier());
    check(10, "determinism and runtime", determinism());
    let tuning = tune();
    check(6, "tuned ordering", ordering(&tuning));
    check(7, "tube coverage", coverage(&tuning));
    check(9, "revenue identity", revenue_identity(&tuning));
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
