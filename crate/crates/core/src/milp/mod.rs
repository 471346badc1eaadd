//! Mixed-integer linear programs: a small model builder and an embedded
//! solver (bounded revised simplex plus best-bound branch-and-bound).

mod bnb;
mod factor;
mod simplex;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Duration;

use thiserror::Error;

pub use bnb::solve_milp;

/// Stable handle of a variable within its model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

/// Stable handle of a constraint row within its model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstrId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sense {
    #[default]
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub integral: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("duplicate variable name '{0}'")]
    DuplicateName(String),
    #[error("inverted bounds on '{name}': {lb} > {ub}")]
    InvertedBounds { name: String, lb: f64, ub: f64 },
    #[error("integer variable '{0}' needs finite bounds")]
    UnboundedInteger(String),
    #[error("unknown variable handle {0}")]
    UnknownVariable(usize),
    #[error("non-finite coefficient for variable {0}")]
    NonFinite(usize),
}

/// Solver-agnostic model: variables with bounds, sparse linear rows and a
/// linear objective with a constant offset.
#[derive(Debug, Clone, Default)]
pub struct Model {
    vars: Vec<Variable>,
    names: HashMap<String, VarId>,
    rows: Vec<Constraint>,
    objective: Vec<f64>,
    offset: f64,
    sense: Sense,
}

impl Model {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            ..Self::default()
        }
    }

    pub fn add_variable(
        &mut self,
        name: impl Into<String>,
        lb: f64,
        ub: f64,
        integral: bool,
    ) -> Result<VarId, ModelError> {
        let name = name.into();
        if self.names.contains_key(&name) {
            return Err(ModelError::DuplicateName(name));
        }
        if lb.is_nan() || ub.is_nan() || lb > ub {
            return Err(ModelError::InvertedBounds { name, lb, ub });
        }
        if integral && !(lb.is_finite() && ub.is_finite()) {
            return Err(ModelError::UnboundedInteger(name));
        }
        let id = VarId(self.vars.len());
        self.names.insert(name.clone(), id);
        self.vars.push(Variable { name, lb, ub, integral });
        self.objective.push(0.0);
        Ok(id)
    }

    pub fn add_constraint(
        &mut self,
        coeffs: &[(VarId, f64)],
        relation: Relation,
        rhs: f64,
    ) -> Result<ConstrId, ModelError> {
        for &(v, a) in coeffs {
            if v.0 >= self.vars.len() {
                return Err(ModelError::UnknownVariable(v.0));
            }
            if !a.is_finite() {
                return Err(ModelError::NonFinite(v.0));
            }
        }
        // Merge repeated handles so the row stays a proper sparse vector.
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(coeffs.len());
        for &(v, a) in coeffs {
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(entry) => entry.1 += a,
                None => merged.push((v, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        let id = ConstrId(self.rows.len());
        self.rows.push(Constraint {
            coeffs: merged,
            relation,
            rhs,
        });
        Ok(id)
    }

    pub fn set_objective_coeff(&mut self, v: VarId, c: f64) {
        self.objective[v.0] = c;
    }

    pub fn add_objective_coeff(&mut self, v: VarId, c: f64) {
        self.objective[v.0] += c;
    }

    pub fn set_objective_offset(&mut self, offset: f64) {
        self.offset = offset;
    }

    pub fn add_objective_offset(&mut self, delta: f64) {
        self.offset += delta;
    }

    pub fn set_sense(&mut self, sense: Sense) {
        self.sense = sense;
    }

    pub fn set_bounds(&mut self, v: VarId, lb: f64, ub: f64) -> Result<(), ModelError> {
        let var = &mut self.vars[v.0];
        if lb.is_nan() || ub.is_nan() || lb > ub {
            return Err(ModelError::InvertedBounds {
                name: var.name.clone(),
                lb,
                ub,
            });
        }
        var.lb = lb;
        var.ub = ub;
        Ok(())
    }

    pub fn var(&self, v: VarId) -> &Variable {
        &self.vars[v.0]
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.names.get(name).copied()
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.rows
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn num_integer(&self) -> usize {
        self.vars.iter().filter(|v| v.integral).count()
    }

    /// Objective value of an assignment, in the model's own sense.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.offset + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest bound, row or integrality violation of an assignment.
    pub fn max_violation(&self, x: &[f64], check_integrality: bool) -> f64 {
        let mut worst = 0.0f64;
        for (var, &v) in self.vars.iter().zip(x) {
            worst = worst.max(var.lb - v).max(v - var.ub);
            if check_integrality && var.integral {
                worst = worst.max((v - v.round()).abs());
            }
        }
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().map(|&(v, a)| a * x[v.0]).sum();
            let viol = match row.relation {
                Relation::Le => lhs - row.rhs,
                Relation::Ge => row.rhs - lhs,
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Plain-text dump, one variable or constraint per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let sense = match self.sense {
            Sense::Maximize => "maximize",
            Sense::Minimize => "minimize",
        };
        let _ = write!(out, "{sense}:");
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                let _ = write!(out, " {:+e} {}", c, self.vars[j].name);
            }
        }
        let _ = writeln!(out, " {:+e}", self.offset);
        for v in &self.vars {
            let kind = if v.integral { "int" } else { "cont" };
            let _ = writeln!(out, "var {} [{:e}, {:e}] {kind}", v.name, v.lb, v.ub);
        }
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(out, "c{i}:");
            for &(v, a) in &row.coeffs {
                let _ = write!(out, " {:+e} {}", a, self.vars[v.0].name);
            }
            let _ = writeln!(out, " {} {:e}", row.relation.symbol(), row.rhs);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    /// Budget ran out with an incumbent in hand; see the reported gap.
    FeasibleBudgetHit,
    Infeasible,
    Unbounded,
    /// Budget ran out before any integer-feasible point was found.
    NoSolution,
}

impl Status {
    pub fn has_solution(self) -> bool {
        matches!(self, Status::Optimal | Status::FeasibleBudgetHit)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::FeasibleBudgetHit => "feasible_budget_hit",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::NoSolution => "no_solution",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub status: Status,
    /// Objective in the model's sense, including the offset.
    pub objective: f64,
    pub values: Vec<f64>,
    /// Relative gap between incumbent and best bound.
    pub gap: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
}

impl MilpSolution {
    fn without_point(status: Status, n: usize) -> Self {
        Self {
            status,
            objective: f64::NAN,
            values: vec![0.0; n],
            gap: f64::INFINITY,
            nodes: 0,
            lp_iterations: 0,
        }
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }
}

/// Tolerances and budgets of the embedded solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub feasibility_tol: f64,
    pub integrality_tol: f64,
    pub relative_gap: f64,
    pub node_limit: usize,
    pub time_limit: Duration,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-6,
            integrality_tol: 1e-6,
            relative_gap: 1e-6,
            node_limit: 100_000,
            time_limit: Duration::from_secs(10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("simplex failed to converge: {0}")]
    Numerical(&'static str),
}

/// Solves the continuous relaxation (integrality flags ignored).
pub fn solve_lp(model: &Model) -> Result<MilpSolution, SolveError> {
    let mut engine = simplex::LpEngine::new(model);
    let status = engine.solve_cold()?;
    let n = model.num_vars();
    let sol = match status {
        simplex::LpStatus::Optimal => {
            let values = engine.structural_values();
            MilpSolution {
                status: Status::Optimal,
                objective: model.evaluate(&values),
                values,
                gap: 0.0,
                nodes: 0,
                lp_iterations: engine.iterations(),
            }
        }
        simplex::LpStatus::Infeasible => MilpSolution::without_point(Status::Infeasible, n),
        simplex::LpStatus::Unbounded => MilpSolution::without_point(Status::Unbounded, n),
        simplex::LpStatus::Cutoff => unreachable!("no cutoff on cold solves"),
    };
    Ok(sol)
}
