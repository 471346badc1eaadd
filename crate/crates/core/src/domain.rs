//! Shared parameter and record types.
//!
//! Units are plain numbers: power in MW, energy in MWh, prices in €/MWh
//! (€/MW/h for reserve capacity), state of charge as a fraction of capacity.

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Physical ratings of the storage unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryParams {
    /// Rated power `P_max` (MW).
    pub rated_power: f64,
    /// Energy capacity `C` (MWh).
    pub capacity: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    pub s_min: f64,
    pub s_max: f64,
    /// Market time step (h).
    pub dt: f64,
    pub s_init: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            rated_power: 10.0,
            capacity: 10.0,
            eta_ch: 0.99,
            eta_dis: 0.99,
            s_min: 0.0,
            s_max: 1.0,
            dt: 1.0,
            s_init: 0.5,
        }
    }
}

/// Constants of the decision-dependent estimation error process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SocErrorParams {
    /// Lower plateau threshold.
    pub b: f64,
    /// Upper plateau threshold.
    pub c: f64,
    /// Mean of the per-full-power-hour error gain.
    pub beta: f64,
    /// Variance of the per-full-power-hour error gain.
    pub sigma2: f64,
    /// Saturation bound on `|w|`.
    pub w_max: f64,
}

impl Default for SocErrorParams {
    fn default() -> Self {
        Self {
            b: 0.15,
            c: 0.9,
            beta: 1e-3,
            sigma2: 1e-4,
            w_max: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketParams {
    /// Reserve capacity price (€/MW/h).
    pub pi_fcr: f64,
    /// Equivalent-cycle degradation cost (€/MWh discharged).
    pub c_deg: f64,
    /// Mean reserve activation used in the optimizer's degradation term.
    pub zeta: f64,
    /// Optimizer imbalance penalty (€/MWh).
    pub c_imb: f64,
    /// Optimizer reserve shortfall penalty (€/MWh).
    pub c_fcr: f64,
    /// Sustained worst-case activation duration (h).
    pub dt_fcr: f64,
    /// Dual-pricing spread applied to the spot price for imbalances.
    pub imb_adder: f64,
    /// Reserve product length (h).
    pub fcr_block_len: usize,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            pi_fcr: 16.0,
            c_deg: 36.5,
            zeta: 0.1,
            c_imb: 1e4,
            c_fcr: 1e5,
            dt_fcr: 0.5,
            imb_adder: 0.3,
            fcr_block_len: 4,
        }
    }
}

/// How the optimizer tightens the state-of-charge box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    None,
    Fixed,
    Adaptive,
    UncertaintyAware,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::None,
        PolicyKind::Fixed,
        PolicyKind::Adaptive,
        PolicyKind::UncertaintyAware,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::None => "none",
            PolicyKind::Fixed => "fixed",
            PolicyKind::Adaptive => "adaptive",
            PolicyKind::UncertaintyAware => "uncertainty_aware",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => Ok(PolicyKind::None),
            "fixed" => Ok(PolicyKind::Fixed),
            "adaptive" => Ok(PolicyKind::Adaptive),
            "uncertainty_aware" | "ua" => Ok(PolicyKind::UncertaintyAware),
            other => Err(format!("unknown policy '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginPolicy {
    pub kind: PolicyKind,
    /// Constant tightening used by [`PolicyKind::Fixed`].
    pub m_fixed: f64,
    /// Per-step margin growth while the SOC sits on the plateau.
    pub w_bar: f64,
    /// Per-step margin decay outside the plateau.
    pub gamma: f64,
    /// Upper bound on the tracked margin / tube size.
    pub delta_max: f64,
    /// Horizon over which the tightening is tuned (steps). Metadata only.
    pub tuning_horizon: usize,
    /// Targeted violation probability. Metadata only.
    pub alpha_target: f64,
}

impl Default for MarginPolicy {
    fn default() -> Self {
        Self {
            kind: PolicyKind::None,
            m_fixed: 0.16,
            w_bar: 0.00018,
            gamma: 0.8,
            delta_max: 0.2,
            tuning_horizon: 72,
            alpha_target: 0.04,
        }
    }
}

impl MarginPolicy {
    pub fn with_kind(kind: PolicyKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    /// Sets the kind's tuning parameter: `m_fixed` for fixed, `w_bar` for the
    /// adaptive and tube policies. Ignored for `none`.
    pub fn with_parameter(mut self, value: f64) -> Self {
        match self.kind {
            PolicyKind::None => {}
            PolicyKind::Fixed => self.m_fixed = value,
            PolicyKind::Adaptive | PolicyKind::UncertaintyAware => self.w_bar = value,
        }
        self
    }

    /// The value [`MarginPolicy::with_parameter`] sets.
    pub fn parameter(&self) -> f64 {
        match self.kind {
            PolicyKind::None => 0.0,
            PolicyKind::Fixed => self.m_fixed,
            PolicyKind::Adaptive | PolicyKind::UncertaintyAware => self.w_bar,
        }
    }
}

/// Closed-loop run settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    /// Optimization horizon `T` (steps).
    pub horizon: usize,
    /// Simulated span (hours).
    pub hours: usize,
    /// Hour of day at which next-day bids become binding.
    pub gate_hour: usize,
    /// Initial estimation error.
    pub w_init: f64,
    /// Std of the optional zero-mean reserve activation signal, as a
    /// fraction of the committed reserve. Zero disables it.
    pub activation_std: f64,
    /// Energy-neutral reserve activation throughput, as a fraction of the
    /// committed reserve. It feeds the error process without moving the SOC.
    /// Zero disables it.
    pub activation_throughput: f64,
    /// Per-solve branch-and-bound node budget.
    pub node_limit: usize,
    /// Per-solve wall-clock budget (s).
    pub time_limit_s: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            horizon: 72,
            hours: 30 * 24,
            gate_hour: 12,
            w_init: 0.0,
            activation_std: 0.0,
            activation_throughput: 0.0,
            node_limit: 200,
            time_limit_s: 10.0,
        }
    }
}

/// Complete, serializable configuration of a run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub battery: BatteryParams,
    pub soc_error: SocErrorParams,
    pub market: MarketParams,
    pub policy: MarginPolicy,
    pub sim: SimSettings,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        validate_params(&self.battery, &self.soc_error, &self.market, &self.policy)?;
        let sim = &self.sim;
        if sim.horizon == 0 {
            return Err(ParamError::OutOfRange("horizon"));
        }
        if sim.gate_hour >= 24 {
            return Err(ParamError::OutOfRange("gate_hour"));
        }
        // The gate solve must see the whole next delivery day.
        if sim.horizon < 48 - sim.gate_hour {
            return Err(ParamError::Violated("horizon covers next delivery day"));
        }
        if !(0.0..=self.soc_error.w_max).contains(&sim.w_init.abs()) {
            return Err(ParamError::OutOfRange("w_init"));
        }
        if !(sim.activation_std >= 0.0 && sim.activation_std.is_finite()) {
            return Err(ParamError::OutOfRange("activation_std"));
        }
        if !(0.0..=1.0).contains(&sim.activation_throughput) {
            return Err(ParamError::OutOfRange("activation_throughput"));
        }
        if sim.time_limit_s.is_nan() || sim.time_limit_s <= 0.0 || sim.node_limit == 0 {
            return Err(ParamError::OutOfRange("solver budget"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamError {
    #[error("{0} out of range")]
    OutOfRange(&'static str),
    #[error("{0} violated")]
    Violated(&'static str),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed configuration: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ParamError),
}

fn in_range(v: f64, lo: f64, hi: f64) -> bool {
    v >= lo && v <= hi
}

/// Checks every parameter invariant; reports the first one violated.
pub fn validate_params(
    battery: &BatteryParams,
    err: &SocErrorParams,
    mkt: &MarketParams,
    pol: &MarginPolicy,
) -> Result<(), ParamError> {
    use ParamError::*;

    if !(battery.rated_power > 0.0 && battery.rated_power.is_finite()) {
        return Err(OutOfRange("rated_power"));
    }
    if !(battery.capacity > 0.0 && battery.capacity.is_finite()) {
        return Err(OutOfRange("capacity"));
    }
    if !(battery.eta_ch > 0.0 && battery.eta_ch <= 1.0) {
        return Err(OutOfRange("eta_ch"));
    }
    if !(battery.eta_dis > 0.0 && battery.eta_dis <= 1.0) {
        return Err(OutOfRange("eta_dis"));
    }
    if !in_range(battery.s_min, 0.0, 1.0) {
        return Err(OutOfRange("s_min"));
    }
    if !in_range(battery.s_max, 0.0, 1.0) {
        return Err(OutOfRange("s_max"));
    }
    if battery.s_min >= battery.s_max {
        return Err(Violated("s_min < s_max"));
    }
    if !(battery.dt > 0.0 && battery.dt.is_finite()) {
        return Err(OutOfRange("dt"));
    }
    if !in_range(battery.s_init, battery.s_min, battery.s_max) {
        return Err(OutOfRange("s_init"));
    }

    if !(err.b > 0.0 && err.b < 1.0) {
        return Err(OutOfRange("b"));
    }
    if !(err.c > 0.0 && err.c < 1.0) {
        return Err(OutOfRange("c"));
    }
    if err.b >= err.c {
        return Err(Violated("b < c"));
    }
    if !err.beta.is_finite() {
        return Err(OutOfRange("beta"));
    }
    if !(err.sigma2 >= 0.0 && err.sigma2.is_finite()) {
        return Err(OutOfRange("sigma2"));
    }
    if !(err.w_max > 0.0 && err.w_max.is_finite()) {
        return Err(OutOfRange("w_max"));
    }

    for (name, v) in [
        ("pi_fcr", mkt.pi_fcr),
        ("c_deg", mkt.c_deg),
        ("c_imb", mkt.c_imb),
        ("c_fcr", mkt.c_fcr),
    ] {
        if !v.is_finite() {
            return Err(OutOfRange(name));
        }
    }
    if !(mkt.dt_fcr > 0.0 && mkt.dt_fcr.is_finite()) {
        return Err(OutOfRange("dt_fcr"));
    }
    if !in_range(mkt.zeta, 0.0, 1.0) {
        return Err(OutOfRange("zeta"));
    }
    if !(mkt.imb_adder >= 0.0 && mkt.imb_adder.is_finite()) {
        return Err(OutOfRange("imb_adder"));
    }
    if mkt.fcr_block_len == 0 || 24 % mkt.fcr_block_len != 0 {
        return Err(Violated("fcr_block_len divides 24"));
    }

    if !in_range(pol.m_fixed, 0.0, 1.0) {
        return Err(OutOfRange("m_fixed"));
    }
    if !in_range(pol.gamma, 0.0, 1.0) {
        return Err(OutOfRange("gamma"));
    }
    if !(pol.w_bar >= 0.0 && pol.w_bar.is_finite()) {
        return Err(OutOfRange("w_bar"));
    }
    if !(pol.delta_max >= 0.0 && pol.delta_max <= (battery.s_max - battery.s_min) / 2.0) {
        return Err(OutOfRange("delta_max"));
    }
    if !in_range(pol.alpha_target, 0.0, 1.0) {
        return Err(OutOfRange("alpha_target"));
    }
    Ok(())
}

/// Hourly day-ahead prices starting at an hour-aligned UTC timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub start: DateTime<Utc>,
    pub pi_da: Vec<f64>,
}

impl PriceSeries {
    pub fn len(&self) -> usize {
        self.pi_da.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi_da.is_empty()
    }

    pub fn timestamp(&self, hour: usize) -> DateTime<Utc> {
        self.start + Duration::hours(hour as i64)
    }

    /// Constant-price series, handy for tests.
    pub fn constant(start: DateTime<Utc>, price: f64, hours: usize) -> Self {
        Self {
            start,
            pi_da: vec![price; hours],
        }
    }
}

/// One simulated market interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourRecord {
    pub t: usize,
    pub pi_da: f64,
    pub p_da_bid: f64,
    pub p_fcr_bid: f64,
    pub p_fcr_delivered: f64,
    pub p_cmd: f64,
    pub p_true: f64,
    pub p_true_ch: f64,
    pub p_true_dis: f64,
    pub p_imb_true: f64,
    pub s_true_begin: f64,
    pub s_true_end: f64,
    pub s_rep: f64,
    /// Estimation error at the start of the hour (`s_true_begin - s_rep`).
    pub w: f64,
    /// Estimation error after the hour.
    pub w_end: f64,
    /// Tightening applied by the optimizer this hour.
    pub margin_m: f64,
    pub r_dam: f64,
    pub r_fcr: f64,
    pub c_imb: f64,
    pub c_deg: f64,
    pub compliant: bool,
    pub power_ok: bool,
    pub shortfall: f64,
    /// The reported SOC had to be clamped into the tightened box.
    pub clamped: bool,
    pub solver_status: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table_one() -> Config {
        Config::default()
    }

    #[test]
    fn table_one_values_are_valid() {
        let cfg = table_one();
        assert_eq!(cfg.battery.rated_power, 10.0);
        assert_eq!(cfg.battery.capacity, 10.0);
        assert_eq!(cfg.soc_error.b, 0.15);
        assert_eq!(cfg.soc_error.c, 0.9);
        assert_eq!(cfg.policy.gamma, 0.8);
        assert_eq!(cfg.market.dt_fcr, 0.5);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn zero_charge_efficiency_rejected() {
        let mut cfg = table_one();
        cfg.battery.eta_ch = 0.0;
        let e = cfg.validate().unwrap_err();
        assert_eq!(e.to_string(), "eta_ch out of range");
    }

    #[test]
    fn plateau_thresholds_must_be_ordered() {
        let mut cfg = table_one();
        cfg.soc_error.b = 0.95;
        cfg.soc_error.c = 0.9;
        assert_eq!(cfg.validate().unwrap_err().to_string(), "b < c violated");
    }

    #[test]
    fn block_length_must_divide_day() {
        let mut cfg = table_one();
        cfg.market.fcr_block_len = 5;
        assert_eq!(
            cfg.validate().unwrap_err(),
            ParamError::Violated("fcr_block_len divides 24")
        );
    }

    #[test]
    fn short_horizon_rejected() {
        let mut cfg = table_one();
        cfg.sim.horizon = 24;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_uses_field_names() {
        let text = table_one().to_json();
        for key in [
            "rated_power",
            "eta_ch",
            "sigma2",
            "w_max",
            "imb_adder",
            "m_fixed",
            "w_bar",
        ] {
            assert!(text.contains(&format!("\"{key}\"")), "{key}");
        }
        let partial = r#"{"battery": {"capacity": 20.0}, "policy": {"kind": "uncertainty_aware"}}"#;
        let cfg = Config::from_json(partial).unwrap();
        assert_eq!(cfg.battery.capacity, 20.0);
        assert_eq!(cfg.battery.rated_power, 10.0);
        assert_eq!(cfg.policy.kind, PolicyKind::UncertaintyAware);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(Config::from_json(r#"{"battery": {"pmax": 1}}"#).is_err());
    }

    #[test]
    fn policy_names_parse() {
        assert_eq!(
            "uncertainty-aware".parse::<PolicyKind>(),
            Ok(PolicyKind::UncertaintyAware)
        );
        assert_eq!("Fixed".parse::<PolicyKind>(), Ok(PolicyKind::Fixed));
        assert!("tube".parse::<PolicyKind>().is_err());
    }

    proptest! {
        #[test]
        fn valid_configs_round_trip(
            p in 0.1f64..100.0,
            cap in 0.1f64..100.0,
            eta in 0.5f64..=1.0,
            b in 0.01f64..0.4,
            c in 0.6f64..0.99,
            w_max in 0.01f64..0.5,
            m in 0.0f64..0.3,
            kind in 0usize..4,
        ) {
            let mut cfg = table_one();
            cfg.battery.rated_power = p;
            cfg.battery.capacity = cap;
            cfg.battery.eta_dis = eta;
            cfg.soc_error.b = b;
            cfg.soc_error.c = c;
            cfg.soc_error.w_max = w_max;
            cfg.policy.m_fixed = m;
            cfg.policy.kind = PolicyKind::ALL[kind];
            prop_assert!(cfg.validate().is_ok());
            let back = Config::from_json(&cfg.to_json()).unwrap();
            prop_assert_eq!(back, cfg);
        }

        #[test]
        fn validation_is_total(eta in -1.0f64..2.0, b in -0.5f64..1.5, c in -0.5f64..1.5) {
            let mut cfg = table_one();
            cfg.battery.eta_ch = eta;
            cfg.soc_error.b = b;
            cfg.soc_error.c = c;
            let ok = eta > 0.0 && eta <= 1.0 && b > 0.0 && b < 1.0 && c > 0.0 && c < 1.0 && b < c;
            prop_assert_eq!(cfg.validate().is_ok(), ok);
        }
    }
}
