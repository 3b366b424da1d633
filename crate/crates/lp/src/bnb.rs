//! Best-first branch-and-bound over integer columns.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::model::LinearProgram;
use crate::simplex::{Basis, Engine, EngineResult, Standard};
use crate::{LpError, SolveOutcome, SolveStatus, Tolerances};

struct Node {
    bound: f64,
    id: usize,
    /// Original-unit bound overrides `(column, lower, upper)`.
    fixes: Vec<(usize, f64, f64)>,
    basis: Basis,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap: smallest bound first, then oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(other.id.cmp(&self.id))
    }
}

fn outcome(r: EngineResult, nodes: usize, started: Instant, bound: f64) -> SolveOutcome {
    SolveOutcome {
        status: r.status,
        objective: r.objective,
        primal: r.primal,
        duals: r.duals,
        reduced_costs: r.reduced_costs,
        iterations: r.iterations,
        nodes,
        wall_time: started.elapsed(),
        best_bound: bound,
        max_scaled_residual: r.max_scaled_residual,
        basis: Some(r.basis),
    }
}

pub(crate) fn solve_relaxation(
    lp: &LinearProgram,
    tol: &Tolerances,
    warm: Option<&Basis>,
) -> Result<SolveOutcome, LpError> {
    let started = Instant::now();
    let sf = Standard::from_lp(lp)?;
    let r = Engine::new(&sf, tol, None, warm).solve()?;
    let bound = r.objective;
    Ok(outcome(r, 1, started, bound))
}

fn scaled_bounds(sf: &Standard, lp: &LinearProgram, fixes: &[(usize, f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    let mut lo = sf.lower[..sf.n].to_vec();
    let mut hi = sf.upper[..sf.n].to_vec();
    for &(j, l, u) in fixes {
        let l = l.max(lp.vars()[j].lower);
        let u = u.min(lp.vars()[j].upper);
        let (sl, su) = sf.scale_bounds(j, l, u);
        lo[j] = sl;
        hi[j] = su;
    }
    (lo, hi)
}

/// Most fractional integer column, ties to the lowest index.
fn branching_column(lp: &LinearProgram, x: &[f64], tol: f64) -> Option<usize> {
    let mut best = None;
    let mut best_frac = tol;
    for v in lp.integer_vars() {
        let xv = x[v.0];
        let frac = (xv - xv.floor()).min(xv.ceil() - xv);
        if frac > best_frac + 1e-12 {
            best_frac = frac;
            best = Some(v.0);
        }
    }
    best
}

pub(crate) fn solve_mip(
    lp: &LinearProgram,
    tol: &Tolerances,
    warm: Option<&Basis>,
) -> Result<SolveOutcome, LpError> {
    if !lp.has_integers() {
        return solve_relaxation(lp, tol, warm);
    }
    let started = Instant::now();
    let sf = Standard::from_lp(lp)?;
    let root = Engine::new(&sf, tol, None, warm).solve()?;
    let mut iterations = root.iterations;
    if root.status != SolveStatus::Optimal {
        let bound = root.objective;
        return Ok(outcome(root, 1, started, bound));
    }

    let mut heap = BinaryHeap::new();
    let mut next_id = 0usize;
    let mut nodes = 0usize;
    let mut incumbent: Option<EngineResult> = None;
    let mut limit_hit = false;
    // Bound of the last node taken from the queue; nodes are popped in bound
    // order, so this is the proven lower bound when the search stops early.
    let mut global_bound = root.objective;
    let mut exhausted = false;

    let mut pending = Some((root, Vec::new()));
    loop {
        if let Some((r, fixes)) = pending.take() {
            nodes += 1;
            let cutoff = incumbent
                .as_ref()
                .map(|inc| inc.objective - tol.mip_gap * inc.objective.abs().max(1.0));
            if r.status == SolveStatus::Optimal && cutoff.is_none_or(|c| r.objective < c) {
                match branching_column(lp, &r.primal, tol.integrality) {
                    None => incumbent = Some(r),
                    Some(j) => {
                        let xj = r.primal[j];
                        for (lo, hi) in [(f64::NEG_INFINITY, xj.floor()), (xj.ceil(), f64::INFINITY)] {
                            let mut child: Vec<(usize, f64, f64)> = fixes.clone();
                            match child.iter_mut().find(|f: &&mut (usize, f64, f64)| f.0 == j) {
                                Some(f) => {
                                    f.1 = f.1.max(lo);
                                    f.2 = f.2.min(hi);
                                }
                                None => child.push((j, lo, hi)),
                            }
                            heap.push(Node {
                                bound: r.objective,
                                id: next_id,
                                fixes: child,
                                basis: r.basis.clone(),
                            });
                            next_id += 1;
                        }
                    }
                }
            }
        }

        let Some(node) = heap.pop() else {
            exhausted = true;
            break;
        };
        if let Some(inc) = &incumbent {
            let gap = tol.mip_gap * inc.objective.abs().max(1.0);
            if node.bound >= inc.objective - gap {
                global_bound = node.bound.min(inc.objective);
                heap.clear();
                break;
            }
        }
        global_bound = node.bound;
        if nodes >= tol.max_nodes
            || iterations >= tol.max_iterations
            || tol.time_limit.is_some_and(|t| started.elapsed() >= t)
        {
            limit_hit = true;
            heap.push(node);
            break;
        }
        let (lo, hi) = scaled_bounds(&sf, lp, &node.fixes);
        let r = Engine::new(&sf, tol, Some((&lo, &hi)), Some(&node.basis)).solve()?;
        iterations += r.iterations;
        pending = Some((r, node.fixes));
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(global_bound, f64::min);
    match incumbent {
        Some(mut inc) => {
            for v in lp.integer_vars() {
                inc.primal[v.0] = inc.primal[v.0].round();
            }
            inc.objective = lp.objective_value(&inc.primal);
            inc.iterations = iterations;
            let best_bound = if exhausted {
                inc.objective
            } else {
                open_bound.min(inc.objective)
            };
            if limit_hit {
                inc.status = SolveStatus::IterationLimit;
            }
            Ok(outcome(inc, nodes, started, best_bound))
        }
        None => {
            let status = if limit_hit {
                SolveStatus::IterationLimit
            } else {
                SolveStatus::Infeasible
            };
            Ok(SolveOutcome {
                status,
                objective: f64::INFINITY,
                primal: vec![0.0; lp.num_vars()],
                duals: vec![0.0; lp.num_rows()],
                reduced_costs: vec![0.0; lp.num_vars()],
                iterations,
                nodes,
                wall_time: started.elapsed(),
                best_bound: open_bound,
                max_scaled_residual: 0.0,
                basis: None,
            })
        }
    }
}
