//! Ground-truth plant: true state of charge and the estimation error the
//! battery management system accumulates on top of it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{BatteryParams, SocErrorParams};

/// Error contraction factor `a(s)`: ramps up from 0 to 1 below `b`, stays at 1
/// on the plateau `(b, c]` and ramps back down to 0 above `c`.
pub fn scaling_factor(s: f64, err: &SocErrorParams) -> f64 {
    let a = if s <= err.b {
        s / err.b
    } else if s <= err.c {
        1.0
    } else {
        1.0 - (s - err.c) / (1.0 - err.c)
    };
    a.clamp(0.0, 1.0)
}

/// One step of the error recursion. `p_true` is normalized by the rated power
/// so `eta_sample` reads as error gain per full-power hour.
pub fn step_error(
    w: f64,
    s_true: f64,
    p_true: f64,
    eta_sample: f64,
    battery: &BatteryParams,
    err: &SocErrorParams,
) -> f64 {
    let a = scaling_factor(s_true, err);
    let drive = p_true.abs() / battery.rated_power * eta_sample;
    (a * (w + drive)).clamp(-err.w_max, err.w_max)
}

/// Power actually exchanged with the grid during one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RealizedDispatch {
    pub p_true_ch: f64,
    pub p_true_dis: f64,
    /// Signed output, discharge positive.
    pub p_true: f64,
}

/// Applies a signed command (discharge positive) to the true SOC, clipping
/// the realized power so the SOC stays within `[s_min, s_max]`.
pub fn step_true_soc(s_true: f64, p_cmd: f64, battery: &BatteryParams) -> (f64, RealizedDispatch) {
    let p_cmd = p_cmd.clamp(-battery.rated_power, battery.rated_power);
    let scale = battery.dt / battery.capacity;
    if p_cmd > 0.0 {
        let headroom = (s_true - battery.s_min).max(0.0) * battery.eta_dis / scale;
        if p_cmd >= headroom {
            let realized = RealizedDispatch {
                p_true_ch: 0.0,
                p_true_dis: headroom,
                p_true: headroom,
            };
            (s_true.min(battery.s_min), realized)
        } else {
            let next = s_true - scale * p_cmd / battery.eta_dis;
            (
                next,
                RealizedDispatch {
                    p_true_ch: 0.0,
                    p_true_dis: p_cmd,
                    p_true: p_cmd,
                },
            )
        }
    } else if p_cmd < 0.0 {
        let want = -p_cmd;
        let headroom = (battery.s_max - s_true).max(0.0) / (battery.eta_ch * scale);
        if want >= headroom {
            let realized = RealizedDispatch {
                p_true_ch: headroom,
                p_true_dis: 0.0,
                p_true: -headroom,
            };
            (s_true.max(battery.s_max), realized)
        } else {
            let next = s_true + scale * battery.eta_ch * want;
            (
                next,
                RealizedDispatch {
                    p_true_ch: want,
                    p_true_dis: 0.0,
                    p_true: -want,
                },
            )
        }
    } else {
        (s_true, RealizedDispatch::default())
    }
}

/// Plant state. Stepping consumes the state and returns its successor.
#[derive(Debug, Clone)]
pub struct BessState {
    pub s_true: f64,
    pub w: f64,
    pub t: usize,
    rng: ChaCha8Rng,
}

/// What one simulated hour produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub t: usize,
    pub s_true_begin: f64,
    pub s_true_end: f64,
    pub w_begin: f64,
    pub w_end: f64,
    pub realized: RealizedDispatch,
    /// Reserve activation power added to the command, if the hook is on.
    pub p_activation: f64,
    pub eta_sample: f64,
}

/// Optional reserve activation hooks for one hour.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Activation {
    /// Committed reserve this hour (MW).
    pub p_fcr: f64,
    /// Std of a zero-mean net activation, as a fraction of `p_fcr`. Moves the SOC.
    pub std: f64,
    /// Energy-neutral activation throughput, as a fraction of `p_fcr`.
    /// Leaves the SOC alone but feeds the error process.
    pub throughput: f64,
}

impl BessState {
    pub fn new(s_true: f64, w: f64, seed: u64) -> Self {
        Self {
            s_true,
            w,
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// What the battery management system reports. Not clamped: the report
    /// can lie outside the physical range.
    pub fn reported_soc(&self) -> f64 {
        self.s_true - self.w
    }

    pub fn simulate_hour(self, p_cmd: f64, battery: &BatteryParams, err: &SocErrorParams) -> (BessState, StepOutcome) {
        self.simulate_hour_with(p_cmd, None, battery, err)
    }

    pub fn simulate_hour_with(
        mut self,
        p_cmd: f64,
        activation: Option<Activation>,
        battery: &BatteryParams,
        err: &SocErrorParams,
    ) -> (BessState, StepOutcome) {
        let p_activation = match activation {
            Some(act) if act.std > 0.0 && act.p_fcr > 0.0 => {
                let z: f64 = Normal::new(0.0, act.std).expect("finite std").sample(&mut self.rng);
                z.clamp(-1.0, 1.0) * act.p_fcr
            }
            _ => 0.0,
        };
        let s_begin = self.s_true;
        let w_begin = self.w;
        let (s_end, realized) = step_true_soc(s_begin, p_cmd + p_activation, battery);
        let eta_sample = if err.sigma2 > 0.0 {
            Normal::new(err.beta, err.sigma2.sqrt())
                .expect("finite variance")
                .sample(&mut self.rng)
        } else {
            err.beta
        };
        let p_err = match activation {
            Some(act) => realized.p_true.abs() + act.throughput.max(0.0) * act.p_fcr,
            None => realized.p_true,
        };
        let w_end = step_error(w_begin, s_begin, p_err, eta_sample, battery, err);
        let outcome = StepOutcome {
            t: self.t,
            s_true_begin: s_begin,
            s_true_end: s_end,
            w_begin,
            w_end,
            realized,
            p_activation,
            eta_sample,
        };
        self.s_true = s_end;
        self.w = w_end;
        self.t += 1;
        (self, outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn err() -> SocErrorParams {
        SocErrorParams::default()
    }

    fn battery() -> BatteryParams {
        BatteryParams::default()
    }

    #[test]
    fn scaling_factor_regions() {
        let e = err();
        assert_eq!(scaling_factor(0.5, &e), 1.0);
        assert_eq!(scaling_factor(0.075, &e), 0.5);
        assert!((scaling_factor(0.95, &e) - 0.5).abs() < 1e-12);
        assert_eq!(scaling_factor(0.0, &e), 0.0);
        assert_eq!(scaling_factor(1.0, &e), 0.0);
    }

    #[test]
    fn step_error_on_plateau() {
        let w = step_error(0.01, 0.5, 10.0, 1e-3, &battery(), &err());
        assert!((w - 0.011).abs() < 1e-15);
    }

    #[test]
    fn empty_battery_resets_error() {
        for w in [-0.2, -0.05, 0.0, 0.13] {
            for p in [-10.0, 0.0, 3.0] {
                assert_eq!(step_error(w, 0.0, p, 0.01, &battery(), &err()), 0.0);
            }
        }
    }

    #[test]
    fn error_saturates() {
        assert_eq!(step_error(0.25, 0.5, 0.0, 0.0, &battery(), &err()), 0.2);
        assert_eq!(step_error(-0.25, 0.5, 0.0, 0.0, &battery(), &err()), -0.2);
    }

    #[test]
    fn charge_clips_at_full() {
        let (s, r) = step_true_soc(0.5, -10.0, &battery());
        assert!((r.p_true_ch - 0.5 * 10.0 / 0.99).abs() < 1e-9);
        assert!((r.p_true_ch - 5.0505).abs() < 1e-4);
        assert_eq!(r.p_true_dis, 0.0);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn discharge_clips_at_empty() {
        let (s, r) = step_true_soc(0.2, 10.0, &battery());
        assert!((r.p_true_dis - 1.98).abs() < 1e-9);
        assert_eq!(r.p_true, r.p_true_dis);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn zero_command_is_identity() {
        let (s, r) = step_true_soc(0.37, 0.0, &battery());
        assert_eq!(s, 0.37);
        assert_eq!(r, RealizedDispatch::default());
    }

    #[test]
    fn reported_soc_is_not_clamped() {
        let mut st = BessState::new(0.5, 0.1, 0);
        assert!((st.reported_soc() - 0.4).abs() < 1e-15);
        st.w = -0.1;
        assert!((st.reported_soc() - 0.6).abs() < 1e-15);
        st.s_true = 0.05;
        st.w = 0.1;
        assert!((st.reported_soc() + 0.05).abs() < 1e-15);
    }

    #[test]
    fn seeded_steps_are_deterministic() {
        let a = BessState::new(0.5, 0.0, 42);
        let b = a.clone();
        let (a1, oa) = a.simulate_hour(4.0, &battery(), &err());
        let (b1, ob) = b.simulate_hour(4.0, &battery(), &err());
        assert_eq!(oa, ob);
        assert_eq!(a1.w.to_bits(), b1.w.to_bits());
    }

    #[test]
    fn noise_free_error_only_contracts() {
        let mut e = err();
        e.beta = 0.0;
        e.sigma2 = 0.0;
        let mut st = BessState::new(0.95, 0.1, 1);
        let mut expected = 0.1;
        for _ in 0..5 {
            let a = scaling_factor(st.s_true, &e);
            let (next, _) = st.simulate_hour(0.0, &battery(), &e);
            expected *= a;
            st = next;
            assert!((st.w - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn plateau_drift_accumulates_linearly() {
        let mut e = err();
        e.sigma2 = 0.0;
        // Large capacity keeps full-power alternation on the plateau.
        let b = BatteryParams {
            capacity: 1000.0,
            ..battery()
        };
        let mut st = BessState::new(0.5, 0.0, 9);
        let mut reference = 0.0f64;
        for k in 0..100 {
            let p = if k % 2 == 0 { 10.0 } else { -10.0 };
            let (next, out) = st.simulate_hour(p, &b, &e);
            assert_eq!(out.realized.p_true.abs(), 10.0);
            reference += 1e-3;
            st = next;
        }
        assert!((st.w - 0.1).abs() < 1e-12);
        assert!((st.w - reference).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn soc_stays_in_bounds_and_energy_balances(s in 0.0f64..=1.0, p in -15.0f64..15.0) {
            let b = battery();
            let (next, r) = step_true_soc(s, p, &b);
            prop_assert!((0.0..=1.0).contains(&next));
            prop_assert!(r.p_true_ch * r.p_true_dis == 0.0);
            prop_assert!(r.p_true_ch >= 0.0 && r.p_true_ch <= b.rated_power);
            prop_assert!(r.p_true_dis >= 0.0 && r.p_true_dis <= b.rated_power);
            let booked = (b.eta_ch * r.p_true_ch - r.p_true_dis / b.eta_dis) * b.dt / b.capacity;
            prop_assert!((next - s - booked).abs() < 1e-12);
        }

        #[test]
        fn scaling_factor_is_continuous(s in 0.0f64..0.999) {
            let e = err();
            let a0 = scaling_factor(s, &e);
            let a1 = scaling_factor(s + 1e-6, &e);
            prop_assert!((0.0..=1.0).contains(&a0));
            prop_assert!((a0 - a1).abs() < 1e-4);
        }

        #[test]
        fn error_grows_with_power(w in -0.1f64..0.1, s in 0.01f64..0.99, p in 0.0f64..9.0, eta in 1e-4f64..0.01) {
            let e = SocErrorParams { w_max: 10.0, ..err() };
            let lo = step_error(w, s, p, eta, &battery(), &e);
            let hi = step_error(w, s, p + 1.0, eta, &battery(), &e);
            prop_assert!(hi > lo);
        }

        #[test]
        fn error_stays_saturated(w in -0.2f64..=0.2, s in 0.0f64..=1.0, p in -10.0f64..10.0, eta in -1.0f64..1.0) {
            let e = err();
            prop_assert!(step_error(w, s, p, eta, &battery(), &e).abs() <= e.w_max);
        }
    }
}
