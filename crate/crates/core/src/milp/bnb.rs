//! Best-bound branch-and-bound with a depth-first dive for the first
//! incumbent. Nodes re-solve with the dual simplex from their parent's basis.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::Instant;

use super::simplex::{LpEngine, LpStatus, Snapshot};
use super::{MilpSolution, Model, SolveError, SolverOptions, Status};

struct Node {
    lb: Vec<f64>,
    ub: Vec<f64>,
    bound: f64,
    depth: usize,
    parent: usize,
    basis: Rc<Snapshot>,
}

struct Open {
    node: Node,
    seq: usize,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Open {}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Open {
    // Max-heap: smallest bound first, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .node
            .bound
            .total_cmp(&self.node.bound)
            .then(self.node.depth.cmp(&other.node.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Solves a mixed-integer program within the given budget.
pub fn solve_milp(model: &Model, opts: &SolverOptions) -> Result<MilpSolution, SolveError> {
    let started = Instant::now();
    let n = model.num_vars();
    let ints: Vec<usize> = (0..n).filter(|&j| model.vars()[j].integral).collect();
    let mut engine = LpEngine::new(model);

    let mut cur_lb = Vec::with_capacity(ints.len());
    let mut cur_ub = Vec::with_capacity(ints.len());
    for &j in &ints {
        let var = &model.vars()[j];
        let lb = (var.lb - opts.integrality_tol).ceil();
        let ub = (var.ub + opts.integrality_tol).floor();
        if lb > ub {
            return Ok(MilpSolution::without_point(Status::Infeasible, n));
        }
        engine.set_bounds(j, lb, ub);
        cur_lb.push(lb);
        cur_ub.push(ub);
    }

    let root = engine.solve_cold()?;
    match root {
        LpStatus::Infeasible => {
            let mut s = MilpSolution::without_point(Status::Infeasible, n);
            s.lp_iterations = engine.iterations();
            return Ok(s);
        }
        LpStatus::Unbounded => {
            let mut s = MilpSolution::without_point(Status::Unbounded, n);
            s.lp_iterations = engine.iterations();
            return Ok(s);
        }
        LpStatus::Cutoff | LpStatus::Optimal => {}
    }

    let mut heap: BinaryHeap<Open> = BinaryHeap::new();
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut seq = 0usize;
    let mut nodes = 1usize;
    let mut solved_id = 0usize;
    let mut budget_hit = false;

    let gap_tol = |inc: f64| opts.relative_gap * inc.abs().max(1.0);

    // The root has been solved already; handle it like any node below.
    let mut pending: Option<Node> = None;
    let mut first = true;
    let mut cur_depth = 0usize;

    loop {
        let node = if first {
            None
        } else {
            let next = pending.take().or_else(|| heap.pop().map(|o| o.node));
            match next {
                Some(nd) => Some(nd),
                None => break,
            }
        };

        if let Some(node) = node {
            if let Some((inc, _)) = &incumbent {
                if node.bound >= inc - gap_tol(*inc) {
                    continue;
                }
            }
            if nodes >= opts.node_limit || started.elapsed() >= opts.time_limit {
                // Put it back so the final gap accounts for it.
                heap.push(Open { node, seq });
                budget_hit = true;
                break;
            }
            for (k, &j) in ints.iter().enumerate() {
                if node.lb[k] != cur_lb[k] || node.ub[k] != cur_ub[k] {
                    engine.set_bounds(j, node.lb[k], node.ub[k]);
                    cur_lb[k] = node.lb[k];
                    cur_ub[k] = node.ub[k];
                }
            }
            if node.parent != solved_id {
                engine.load(&node.basis);
            }
            let cutoff = match &incumbent {
                Some((inc, _)) => inc - gap_tol(*inc),
                None => f64::INFINITY,
            };
            nodes += 1;
            solved_id = nodes;
            cur_depth = node.depth;
            match engine.reoptimize(cutoff)? {
                LpStatus::Infeasible | LpStatus::Cutoff => continue,
                LpStatus::Unbounded => {
                    let mut s = MilpSolution::without_point(Status::Unbounded, n);
                    s.nodes = nodes;
                    s.lp_iterations = engine.iterations();
                    return Ok(s);
                }
                LpStatus::Optimal => {}
            }
        }
        first = false;

        let obj = engine.objective();
        if let Some((inc, _)) = &incumbent {
            if obj >= inc - gap_tol(*inc) {
                continue;
            }
        }
        let x = engine.structural_values();
        let branch = ints
            .iter()
            .enumerate()
            .filter_map(|(k, &j)| {
                let frac = x[j] - x[j].floor();
                let dist = frac.min(1.0 - frac);
                (dist > opts.integrality_tol).then_some((k, j, dist))
            })
            .max_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(&a.0)));

        let Some((k, j, _)) = branch else {
            incumbent = Some((obj, x));
            continue;
        };

        let basis = Rc::new(engine.snapshot());
        if incumbent.is_none() && nodes == 1 && nodes < opts.node_limit {
            nodes += 1;
            incumbent = round_and_resolve(&mut engine, &ints, &x, &cur_lb, &cur_ub)?;
            engine.load(&basis);
            // The engine no longer holds the root's solution.
            solved_id = usize::MAX;
        }

        let depth = cur_depth + 1;
        let v = x[j];
        let parent_id = if solved_id == usize::MAX { nodes } else { solved_id };
        let mut down = Node {
            lb: cur_lb.clone(),
            ub: cur_ub.clone(),
            bound: obj,
            depth,
            parent: parent_id,
            basis: Rc::clone(&basis),
        };
        down.ub[k] = v.floor();
        let mut up = Node {
            lb: cur_lb.clone(),
            ub: cur_ub.clone(),
            bound: obj,
            depth,
            parent: parent_id,
            basis,
        };
        up.lb[k] = v.ceil();

        if incumbent.is_none() {
            // Dive toward the nearer integer; the sibling waits on the heap.
            let (near, far) = if v - v.floor() < 0.5 { (down, up) } else { (up, down) };
            seq += 1;
            heap.push(Open { node: far, seq });
            pending = Some(near);
        } else {
            seq += 1;
            heap.push(Open { node: down, seq });
            seq += 1;
            heap.push(Open { node: up, seq });
        }
    }

    let best_open = heap.iter().map(|o| o.node.bound).fold(f64::INFINITY, f64::min);

    let Some((inc, x)) = incumbent else {
        let status = if budget_hit {
            Status::NoSolution
        } else {
            Status::Infeasible
        };
        let mut s = MilpSolution::without_point(status, n);
        s.nodes = nodes;
        s.lp_iterations = engine.iterations();
        return Ok(s);
    };

    let bound = best_open.min(inc);
    let gap = (inc - bound).max(0.0) / inc.abs().max(1.0);
    let status = if gap <= opts.relative_gap || !budget_hit {
        Status::Optimal
    } else {
        Status::FeasibleBudgetHit
    };
    let mut values = x;
    for &j in &ints {
        values[j] = values[j].round();
    }
    Ok(MilpSolution {
        status,
        objective: model.evaluate(&values),
        values,
        gap: if status == Status::Optimal {
            gap.min(opts.relative_gap)
        } else {
            gap
        },
        nodes,
        lp_iterations: engine.iterations(),
    })
}

/// Root heuristic: fixes the integers at their rounded relaxation values,
/// then at their lower bounds, re-solving the continuous rest each time and
/// keeping the better point. Bounds are restored afterwards; the basis is not.
fn round_and_resolve(
    engine: &mut LpEngine,
    ints: &[usize],
    x: &[f64],
    lb: &[f64],
    ub: &[f64],
) -> Result<Option<(f64, Vec<f64>)>, SolveError> {
    let rounded: Vec<f64> = ints
        .iter()
        .enumerate()
        .map(|(k, &j)| x[j].round().clamp(lb[k], ub[k]))
        .collect();
    let mut found = None;
    for fix in [&rounded[..], lb] {
        for (k, &j) in ints.iter().enumerate() {
            engine.set_bounds(j, fix[k], fix[k]);
        }
        if let LpStatus::Optimal = engine.reoptimize(f64::INFINITY)? {
            let obj = engine.objective();
            if found.as_ref().is_none_or(|(best, _): &(f64, Vec<f64>)| obj < *best) {
                found = Some((obj, engine.structural_values()));
            }
        }
    }
    for (k, &j) in ints.iter().enumerate() {
        engine.set_bounds(j, lb[k], ub[k]);
    }
    Ok(found)
}
