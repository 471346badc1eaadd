//! Bounded revised simplex.
//!
//! Rows are written as `A x - r = 0` with one logical `r_i` per row carrying
//! the row's bounds, so every column has a box and the right-hand side is
//! zero. Cold solves run a composite primal simplex (phase one minimizes the
//! sum of bound violations); warm starts after bound changes run the dual
//! simplex from the previous optimal basis.

use super::factor::{reinvert, Factor, Matrix};
use super::{Model, Relation, Sense, SolveError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum VarState {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable parked at zero.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Dual simplex proved the node objective exceeds the cutoff.
    Cutoff,
}

#[derive(Debug, Clone)]
pub(crate) struct Snapshot {
    state: Vec<VarState>,
    head: Vec<usize>,
}

const REFACTOR_EVERY: usize = 64;
const STALL_LIMIT: usize = 60;

pub(crate) struct LpEngine {
    mat: Matrix,
    cost: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    head: Vec<usize>,
    factor: Factor,
    iterations: usize,
    tol_primal: f64,
    tol_dual: f64,
    tol_pivot: f64,
    y: Vec<f64>,
    rho: Vec<f64>,
    alpha: Vec<f64>,
    d: Vec<f64>,
}

impl LpEngine {
    pub fn new(model: &Model) -> Self {
        let n = model.num_vars();
        let m = model.num_constraints();
        let mut counts = vec![0usize; n + 1];
        for row in model.constraints() {
            for &(v, _) in &row.coeffs {
                counts[v.0 + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let start = counts.clone();
        let mut fill = counts;
        let nnz = start[n];
        let mut idx = vec![0usize; nnz];
        let mut val = vec![0.0; nnz];
        let mut lb = Vec::with_capacity(n + m);
        let mut ub = Vec::with_capacity(n + m);
        for var in model.vars() {
            lb.push(var.lb);
            ub.push(var.ub);
        }
        for (i, row) in model.constraints().iter().enumerate() {
            for &(v, a) in &row.coeffs {
                let k = fill[v.0];
                idx[k] = i;
                val[k] = a;
                fill[v.0] += 1;
            }
            let (lo, hi) = match row.relation {
                Relation::Le => (f64::NEG_INFINITY, row.rhs),
                Relation::Ge => (row.rhs, f64::INFINITY),
                Relation::Eq => (row.rhs, row.rhs),
            };
            lb.push(lo);
            ub.push(hi);
        }
        let sign = match model.sense() {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut cost: Vec<f64> = model.objective().iter().map(|c| sign * c).collect();
        cost.resize(n + m, 0.0);
        let cmax = cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
        let mut engine = Self {
            mat: Matrix { m, n, start, idx, val },
            cost,
            lb,
            ub,
            x: vec![0.0; n + m],
            state: vec![VarState::Lower; n + m],
            head: Vec::new(),
            factor: Factor::default(),
            iterations: 0,
            tol_primal: 1e-9,
            tol_dual: 1e-9 * cmax,
            tol_pivot: 1e-9,
            y: vec![0.0; m],
            rho: vec![0.0; m],
            alpha: vec![0.0; m],
            d: vec![0.0; n + m],
        };
        engine.slack_basis();
        engine
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    fn nonbasic_home(&self, j: usize) -> (VarState, f64) {
        if self.lb[j].is_finite() {
            (VarState::Lower, self.lb[j])
        } else if self.ub[j].is_finite() {
            (VarState::Upper, self.ub[j])
        } else {
            (VarState::Free, 0.0)
        }
    }

    fn slack_basis(&mut self) {
        let n = self.mat.n;
        let m = self.mat.m;
        for j in 0..n {
            let (st, v) = self.nonbasic_home(j);
            self.state[j] = st;
            self.x[j] = v;
        }
        for i in 0..m {
            self.state[n + i] = VarState::Basic;
        }
        self.head = (n..n + m).collect();
        self.refactor();
    }

    fn refactor(&mut self) {
        let inv = reinvert(&self.mat, &self.head);
        for &j in &inv.rejected {
            let (st, v) = self.nonbasic_home(j);
            self.state[j] = st;
            self.x[j] = v;
        }
        for &j in &inv.head {
            self.state[j] = VarState::Basic;
        }
        self.head = inv.head;
        self.factor = inv.factor;
        self.compute_primal();
    }

    /// Recomputes basic values from the nonbasic ones.
    fn compute_primal(&mut self) {
        let m = self.mat.m;
        let mut work = std::mem::take(&mut self.alpha);
        work.iter_mut().for_each(|w| *w = 0.0);
        for j in 0..self.mat.n + m {
            if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                self.mat.for_each_in_col(j, |i, a| work[i] += a * xj);
            }
        }
        self.factor.ftran(&mut work);
        for (&j, &v) in self.head.iter().zip(&work) {
            self.x[j] = -v;
        }
        self.alpha = work;
    }

    fn violation(&self, j: usize) -> f64 {
        let v = self.x[j];
        (self.lb[j] - v).max(v - self.ub[j]).max(0.0)
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.ub[j] - self.lb[j] <= 0.0
    }

    /// Objective of the current point in the internal (minimization) sense.
    pub fn objective(&self) -> f64 {
        self.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    pub fn structural_values(&self) -> Vec<f64> {
        self.x[..self.mat.n].to_vec()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            state: self.state.clone(),
            head: self.head.clone(),
        }
    }

    pub fn load(&mut self, snap: &Snapshot) {
        self.state.clone_from(&snap.state);
        self.head.clone_from(&snap.head);
        for j in 0..self.state.len() {
            self.park(j);
        }
        self.refactor();
    }

    /// Moves a nonbasic variable onto the bound its state names.
    fn park(&mut self, j: usize) {
        match self.state[j] {
            VarState::Basic => {}
            VarState::Lower if self.lb[j].is_finite() => self.x[j] = self.lb[j],
            VarState::Upper if self.ub[j].is_finite() => self.x[j] = self.ub[j],
            VarState::Free if !self.lb[j].is_finite() && !self.ub[j].is_finite() => self.x[j] = 0.0,
            _ => {
                let (st, v) = self.nonbasic_home(j);
                self.state[j] = st;
                self.x[j] = v;
            }
        }
    }

    /// Changes a structural variable's bounds; takes effect on the next solve.
    pub fn set_bounds(&mut self, j: usize, lb: f64, ub: f64) {
        self.lb[j] = lb;
        self.ub[j] = ub;
        self.park(j);
    }

    pub fn solve_cold(&mut self) -> Result<LpStatus, SolveError> {
        self.slack_basis();
        self.primal()
    }

    /// Re-solves after bound changes, warm-started from the current basis.
    pub fn reoptimize(&mut self, cutoff: f64) -> Result<LpStatus, SolveError> {
        self.compute_primal();
        if self.dual_feasible() {
            match self.dual(cutoff) {
                Ok(LpStatus::Optimal) => {}
                Ok(other) => return Ok(other),
                Err(_) => return self.solve_cold(),
            }
        }
        match self.primal() {
            Ok(status) => Ok(status),
            Err(_) => self.solve_cold(),
        }
    }

    fn compute_duals(&mut self) {
        for k in 0..self.mat.m {
            self.y[k] = self.cost[self.head[k]];
        }
        self.factor.btran(&mut self.y);
    }

    fn reduced_cost(&self, j: usize) -> f64 {
        self.cost[j] - self.mat.dot_col(j, &self.y)
    }

    fn dual_feasible(&mut self) -> bool {
        self.compute_duals();
        (0..self.state.len()).all(|j| {
            if self.is_fixed(j) {
                return true;
            }
            let d = self.reduced_cost(j);
            match self.state[j] {
                VarState::Basic => true,
                VarState::Lower => d >= -self.tol_dual * 10.0,
                VarState::Upper => d <= self.tol_dual * 10.0,
                VarState::Free => d.abs() <= self.tol_dual * 10.0,
            }
        })
    }

    fn load_column(&mut self, j: usize) {
        self.alpha.iter_mut().for_each(|a| *a = 0.0);
        let alpha = &mut self.alpha;
        self.mat.for_each_in_col(j, |i, a| alpha[i] = a);
        self.factor.ftran(&mut self.alpha);
    }

    fn pivot(&mut self, r: usize, q: usize, leaving_state: VarState) {
        let p = self.head[r];
        self.state[p] = leaving_state;
        self.state[q] = VarState::Basic;
        self.head[r] = q;
        self.factor.update(r, &self.alpha);
        if self.factor.updates() >= REFACTOR_EVERY {
            self.refactor();
        }
    }

    fn iteration_cap(&self) -> usize {
        50 * (self.mat.m + self.mat.n) + 10_000
    }

    /// Composite primal simplex from the current basis.
    fn primal(&mut self) -> Result<LpStatus, SolveError> {
        let n_total = self.state.len();
        let mut budget = self.iteration_cap();
        let mut best = f64::INFINITY;
        let mut stall = 0usize;
        let mut bland = false;
        loop {
            if budget == 0 {
                return Err(SolveError::Numerical("primal iteration limit"));
            }
            budget -= 1;

            let mut infeas = 0.0;
            for k in 0..self.mat.m {
                let v = self.violation(self.head[k]);
                if v > self.tol_primal {
                    infeas += v;
                }
            }
            let phase1 = infeas > 0.0;
            for k in 0..self.mat.m {
                let j = self.head[k];
                self.y[k] = if phase1 {
                    if self.x[j] < self.lb[j] - self.tol_primal {
                        -1.0
                    } else if self.x[j] > self.ub[j] + self.tol_primal {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    self.cost[j]
                };
            }
            self.factor.btran(&mut self.y);

            let progress = if phase1 { infeas } else { self.objective() };
            if progress < best - 1e-12 * (1.0 + best.abs().min(1e12)) || best.is_infinite() {
                best = progress;
                stall = 0;
                bland = false;
            } else {
                stall += 1;
                if stall > STALL_LIMIT {
                    bland = true;
                }
            }

            let tol_d = if phase1 { 1e-9 } else { self.tol_dual };
            let mut entering: Option<(usize, f64)> = None;
            let mut best_score = 0.0;
            for j in 0..n_total {
                let st = self.state[j];
                if st == VarState::Basic || self.is_fixed(j) {
                    continue;
                }
                let cj = if phase1 { 0.0 } else { self.cost[j] };
                let d = cj - self.mat.dot_col(j, &self.y);
                let eligible = match st {
                    VarState::Lower => d < -tol_d,
                    VarState::Upper => d > tol_d,
                    VarState::Free => d.abs() > tol_d,
                    VarState::Basic => false,
                };
                if !eligible {
                    continue;
                }
                if bland {
                    entering = Some((j, d));
                    break;
                }
                let score = d.abs();
                if score > best_score {
                    best_score = score;
                    entering = Some((j, d));
                }
            }
            let Some((q, dq)) = entering else {
                return Ok(if phase1 {
                    LpStatus::Infeasible
                } else {
                    LpStatus::Optimal
                });
            };
            let dir = if dq < 0.0 { 1.0 } else { -1.0 };
            self.load_column(q);

            let leave = self.primal_ratio(dir, phase1, bland);
            let range = self.ub[q] - self.lb[q];
            let flip = match leave {
                Some((_, theta, _)) => range.is_finite() && range <= theta,
                None => range.is_finite(),
            };
            self.iterations += 1;
            if flip {
                self.shift(q, dir * range);
                self.state[q] = if dir > 0.0 { VarState::Upper } else { VarState::Lower };
                self.x[q] = if dir > 0.0 { self.ub[q] } else { self.lb[q] };
                continue;
            }
            let Some((r, theta, to_upper)) = leave else {
                if phase1 {
                    // Cannot happen in exact arithmetic; rebuild and retry.
                    self.refactor();
                    continue;
                }
                return Ok(LpStatus::Unbounded);
            };
            self.shift(q, dir * theta);
            let p = self.head[r];
            self.x[p] = if to_upper { self.ub[p] } else { self.lb[p] };
            let st = if to_upper && !self.is_fixed(p) {
                VarState::Upper
            } else {
                VarState::Lower
            };
            self.pivot(r, q, st);
        }
    }

    /// Moves entering variable `q` by `delta`, basics along `-alpha`.
    fn shift(&mut self, q: usize, delta: f64) {
        if delta == 0.0 {
            return;
        }
        self.x[q] += delta;
        for k in 0..self.mat.m {
            let a = self.alpha[k];
            if a != 0.0 {
                self.x[self.head[k]] -= a * delta;
            }
        }
    }

    /// Returns (row position, step, leaves at upper bound).
    fn primal_ratio(&self, dir: f64, phase1: bool, bland: bool) -> Option<(usize, f64, bool)> {
        let tol = self.tol_primal;
        // (position, exact step, relaxed step, to_upper)
        let mut cands: Vec<(usize, f64, f64, bool)> = Vec::new();
        for k in 0..self.mat.m {
            let a = self.alpha[k];
            if a.abs() <= self.tol_pivot {
                continue;
            }
            let j = self.head[k];
            let rate = -dir * a;
            let xj = self.x[j];
            if rate < 0.0 {
                let (bound, up) = if phase1 && xj > self.ub[j] + tol {
                    (self.ub[j], true)
                } else if self.lb[j].is_finite() && xj >= self.lb[j] - tol {
                    (self.lb[j], false)
                } else {
                    continue;
                };
                let dist = xj - bound;
                cands.push((k, dist / -rate, (dist + tol) / -rate, up));
            } else {
                let (bound, up) = if phase1 && xj < self.lb[j] - tol {
                    (self.lb[j], false)
                } else if self.ub[j].is_finite() && xj <= self.ub[j] + tol {
                    (self.ub[j], true)
                } else {
                    continue;
                };
                let dist = bound - xj;
                cands.push((k, dist / rate, (dist + tol) / rate, up));
            }
        }
        if cands.is_empty() {
            return None;
        }
        if bland {
            let min = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            let pick = cands
                .iter()
                .filter(|c| c.1 <= min + 1e-12)
                .min_by_key(|c| self.head[c.0])
                .expect("nonempty");
            return Some((pick.0, pick.1.max(0.0), pick.3));
        }
        let theta_max = cands.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
        let pick = cands
            .iter()
            .filter(|c| c.1 <= theta_max)
            .max_by(|a, b| self.alpha[a.0].abs().total_cmp(&self.alpha[b.0].abs()))
            .expect("min candidate qualifies");
        Some((pick.0, pick.1.max(0.0), pick.3))
    }

    /// Dual simplex; assumes a dual feasible basis.
    fn dual(&mut self, cutoff: f64) -> Result<LpStatus, SolveError> {
        let n_total = self.state.len();
        let mut budget = self.iteration_cap();
        let mut count = 0usize;
        loop {
            if budget == 0 {
                return Err(SolveError::Numerical("dual iteration limit"));
            }
            budget -= 1;

            let mut leave: Option<(usize, f64)> = None;
            let mut worst = self.tol_primal;
            for k in 0..self.mat.m {
                let v = self.violation(self.head[k]);
                if v > worst {
                    worst = v;
                    leave = Some((k, v));
                }
            }
            let Some((r, _)) = leave else {
                return Ok(LpStatus::Optimal);
            };
            count += 1;
            if cutoff.is_finite() && count.is_multiple_of(8) && self.objective() > cutoff {
                return Ok(LpStatus::Cutoff);
            }
            let p = self.head[r];
            let to_upper = self.x[p] > self.ub[p];
            let target = if to_upper { self.ub[p] } else { self.lb[p] };
            let delta = target - self.x[p];

            self.compute_duals();
            self.rho.iter_mut().for_each(|v| *v = 0.0);
            self.rho[r] = 1.0;
            self.factor.btran(&mut self.rho);

            let tol_d = self.tol_dual;
            // (var, ratio, relaxed ratio, |alpha_rj|)
            let mut cands: Vec<(usize, f64, f64, f64)> = Vec::new();
            for j in 0..n_total {
                let st = self.state[j];
                if st == VarState::Basic || self.is_fixed(j) {
                    continue;
                }
                let arj = self.mat.dot_col(j, &self.rho);
                if arj.abs() <= self.tol_pivot {
                    continue;
                }
                // Moving x_j by t changes x_p by -arj * t.
                let ok = match st {
                    VarState::Lower => (delta > 0.0 && arj < 0.0) || (delta < 0.0 && arj > 0.0),
                    VarState::Upper => (delta > 0.0 && arj > 0.0) || (delta < 0.0 && arj < 0.0),
                    VarState::Free => true,
                    VarState::Basic => false,
                };
                if !ok {
                    continue;
                }
                let d = self.cost[j] - self.mat.dot_col(j, &self.y);
                self.d[j] = d;
                let slack = match st {
                    VarState::Lower => d.max(0.0),
                    VarState::Upper => (-d).max(0.0),
                    _ => d.abs(),
                };
                cands.push((j, slack / arj.abs(), (slack + tol_d) / arj.abs(), arj.abs()));
            }
            if cands.is_empty() {
                return Ok(LpStatus::Infeasible);
            }
            let theta_max = cands.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
            let q = cands
                .iter()
                .filter(|c| c.1 <= theta_max)
                .max_by(|a, b| a.3.total_cmp(&b.3))
                .expect("min candidate qualifies")
                .0;

            self.load_column(q);
            let arq = self.alpha[r];
            if arq.abs() <= self.tol_pivot {
                self.refactor();
                continue;
            }
            self.iterations += 1;
            let t = delta / -arq;
            self.shift(q, t);
            self.x[p] = target;
            let st = if to_upper && !self.is_fixed(p) {
                VarState::Upper
            } else {
                VarState::Lower
            };
            self.pivot(r, q, st);
        }
    }
}
