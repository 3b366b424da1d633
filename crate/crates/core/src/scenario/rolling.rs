use std::time::{Duration, Instant};

use std::collections::HashMap;

use freqsuc_lp::{Basis, BundledSolver, LpBackend, LpError, SolveStatus, Tolerances, VarStatus};
use freqsuc_lp::model::LinearProgram;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tree::{build_tree, realized_trace, ForecastErrorModel, ScenarioError, ScenarioTree};
use crate::coretypes::{CostBreakdown, ScheduleResult, SystemCase};
use crate::freqsec::NadirCutSet;
use crate::ucmodel::{assemble, record_cost, InitialState, UcError, UcOptions};

/// Root slack (MW) above which a step counts as insecure.
const UNCOVERED_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RollingError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Model(#[from] UcError),
    #[error(transparent)]
    Solver(#[from] LpError),
    #[error("series '{series}' covers {got} steps, the run needs {needed}")]
    ShortSeries {
        series: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("step {step} has no feasible schedule even without frequency constraints ({status})")]
    Infeasible { step: usize, status: SolveStatus },
}

/// Which RES path the rolling run treats as realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TracePath {
    Median,
    Sampled(u64),
}

#[derive(Debug, Clone)]
pub struct RollingOptions {
    pub lookahead: usize,
    /// Steps solved before the reported window to settle the initial state.
    pub warmup: usize,
    /// Absolute step of the first warm-up step.
    pub start: usize,
    pub model: ForecastErrorModel,
    pub trace: TracePath,
    pub uc: UcOptions,
    pub cuts: NadirCutSet,
    pub tolerances: Tolerances,
}

impl RollingOptions {
    pub fn new(case: &SystemCase, model: ForecastErrorModel, cuts: NadirCutSet) -> Self {
        Self {
            lookahead: 24,
            warmup: 0,
            start: 0,
            model,
            trace: TracePath::Median,
            uc: UcOptions::for_case(case, 24),
            cuts,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fallback {
    /// Solved with a VoLL-priced slack on the secured loss.
    UncoveredLoss,
    /// Solved without frequency constraints.
    Unsecured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsecureStep {
    /// Reported step (negative during warm-up is not recorded).
    pub step: usize,
    pub fallback: Fallback,
}

#[derive(Debug, Clone)]
pub struct RollingOutcome {
    /// One realized record per reported step, `t` counted from the window start.
    pub result: ScheduleResult,
    /// State entering each reported step, plus the final state.
    pub states: Vec<InitialState>,
    pub insecure: Vec<InsecureStep>,
    /// Warm-up steps that needed a fallback.
    pub warmup_insecure: usize,
    pub solve_time: Duration,
    pub iterations: usize,
}

/// Rolling planning: at each step build a tree over the lookahead, solve,
/// implement the root decisions and advance the carried state.
pub fn rolling_run(
    case: &SystemCase,
    opts: &RollingOptions,
    total_steps: usize,
) -> Result<RollingOutcome, RollingError> {
    let mut solver = BundledSolver::new(opts.tolerances.clone());
    rolling_run_with(case, opts, total_steps, &mut solver)
}

/// [`rolling_run`] on a caller-supplied backend.
pub fn rolling_run_with(
    case: &SystemCase,
    opts: &RollingOptions,
    total_steps: usize,
    backend: &mut dyn LpBackend,
) -> Result<RollingOutcome, RollingError> {
    let steps = opts.warmup + total_steps;
    let needed = opts.start + steps + opts.lookahead - 1;
    for (series, got) in [
        ("demand", case.demand.len()),
        ("res_forecast", case.res_forecast.len()),
    ] {
        if got < needed {
            return Err(RollingError::ShortSeries { series, needed, got });
        }
    }
    let realized = match opts.trace {
        TracePath::Median => case.res_forecast.clone(),
        TracePath::Sampled(seed) => realized_trace(&case.res_forecast, &opts.model, Some(seed)),
    };
    // The primary solve carries a VoLL-priced slack on the secured loss, so
    // it stays feasible whenever the unsecured problem is. The slack is only
    // used when no commitment can cover the loss.
    let mut uc = opts.uc.clone();
    uc.horizon_steps = opts.lookahead;
    uc.allow_uncovered_loss = uc.include_frequency_constraints;
    let mut unsecured_uc = uc.clone();
    unsecured_uc.include_frequency_constraints = false;
    unsecured_uc.allow_uncovered_loss = false;

    // Previous primary solve, for shifted warm starts.
    let mut previous: Option<(LinearProgram, ScenarioTree, Basis)> = None;

    let mut state = InitialState::cold(case);
    let mut records = Vec::with_capacity(total_steps);
    let mut states = Vec::with_capacity(total_steps + 1);
    let mut insecure = Vec::new();
    let mut warmup_insecure = 0;
    let mut costs = CostBreakdown::default();
    let mut solve_time = Duration::ZERO;
    let mut iterations = 0;
    let began = Instant::now();

    for k in 0..steps {
        let a = opts.start + k;
        let mut forecast = case.res_forecast[a..a + opts.lookahead].to_vec();
        forecast[0] = realized[a];
        let tree = build_tree(&forecast, &opts.model, opts.lookahead)?;

        let mut attempts: Vec<(&UcOptions, Option<Fallback>)> = vec![(&uc, None)];
        if uc.include_frequency_constraints {
            attempts.push((&unsecured_uc, Some(Fallback::Unsecured)));
        }
        let mut solved = None;
        let mut last_status = SolveStatus::Infeasible;
        for (i, (o, fb)) in attempts.into_iter().enumerate() {
            let model = assemble(case, &tree, o, &opts.cuts, &state, a)?;
            let warm = match (&previous, i) {
                (Some((lp, old_tree, basis)), 0) => {
                    Some(shift_basis(lp, old_tree, basis, &model.lp, &tree))
                }
                _ => None,
            };
            let t0 = Instant::now();
            let out = backend.solve_warm(&model.lp, warm.as_ref())?;
            solve_time += t0.elapsed();
            iterations += out.iterations;
            log::debug!(
                "step {a}: {} in {:.3}s, {} iterations",
                out.status,
                out.wall_time.as_secs_f64(),
                out.iterations
            );
            if i == 0 {
                previous = out.basis.clone().map(|b| (model.lp.clone(), tree.clone(), b));
            }
            if out.status == SolveStatus::Optimal {
                solved = Some((model.extract_outcome(case, &tree, &out)?, fb));
                break;
            }
            last_status = out.status;
        }
        let Some((sched, fb)) = solved else {
            return Err(RollingError::Infeasible {
                step: a,
                status: last_status,
            });
        };
        let mut root = sched.records[0].clone();
        root.res = realized[a];
        let fb = fb.or((root.uncovered_loss > UNCOVERED_TOL).then_some(Fallback::UncoveredLoss));
        let reported = k >= opts.warmup;
        if let Some(fallback) = fb {
            if reported {
                insecure.push(InsecureStep {
                    step: k - opts.warmup,
                    fallback,
                });
            } else {
                warmup_insecure += 1;
            }
        }
        let next = state.advance(case, &root);
        if reported {
            states.push(state);
            root.t = k - opts.warmup;
            root.node = root.t;
            root.parent = root.t.checked_sub(1);
            costs.add(&record_cost(case, &root, uc.dt));
            records.push(root);
        }
        state = next;
    }
    states.push(state);
    log::info!(
        "rolling run of {} steps in {:.1}s ({:.1}s solving)",
        steps,
        began.elapsed().as_secs_f64(),
        solve_time.as_secs_f64()
    );
    Ok(RollingOutcome {
        result: ScheduleResult {
            case_name: case.name.clone(),
            thermal_names: case.thermal.iter().map(|u| u.name.clone()).collect(),
            storage_names: case.storage.iter().map(|s| s.name.clone()).collect(),
            records,
            total_cost: costs.total(),
            costs,
            insecure_steps: insecure.iter().map(|s| s.step).collect(),
        },
        states,
        insecure,
        warmup_insecure,
        solve_time,
        iterations,
    })
}

/// Splits a column or row name `prefix_..n{node}` into prefix and node.
fn split_node(name: &str) -> Option<(&str, usize)> {
    let k = name.rfind('n')?;
    Some((&name[..k], name[k + 1..].parse().ok()?))
}

/// Maps each node of `new` to the node of `old` one stage later on the path
/// through the old root's child closest to the new root, matching forecast
/// error as closely as possible. The last stage maps onto the last stage.
fn shift_nodes(old: &ScenarioTree, new: &ScenarioTree) -> Vec<usize> {
    let last = old.num_stages() - 1;
    let root_child = old.children(0).map(|c| c.id).min_by(|&a, &b| {
        let da = (old.nodes[a].res - new.root().res).abs();
        let db = (old.nodes[b].res - new.root().res).abs();
        da.total_cmp(&db)
    });
    new.nodes
        .iter()
        .map(|n| {
            let Some(rc) = root_child else { return 0 };
            let stage = (n.stage + 1).min(last);
            old.stages[stage]
                .iter()
                .copied()
                .filter(|&o| old.ancestor(o, stage - 1) == Some(rc))
                .min_by(|&a, &b| {
                    let da = (old.nodes[a].z - n.z).abs();
                    let db = (old.nodes[b].z - n.z).abs();
                    da.total_cmp(&db)
                })
                .unwrap_or(0)
        })
        .collect()
}

/// Basis for `new_lp` taken from the solved `old_lp` of the previous step,
/// shifted forward one stage.
fn shift_basis(
    old_lp: &LinearProgram,
    old_tree: &ScenarioTree,
    old_basis: &Basis,
    new_lp: &LinearProgram,
    new_tree: &ScenarioTree,
) -> Basis {
    let map = shift_nodes(old_tree, new_tree);
    let (n_old, n_new) = (old_lp.num_vars(), new_lp.num_vars());
    let mut index: HashMap<(&str, usize), usize> = HashMap::with_capacity(n_old + old_lp.num_rows());
    for (j, v) in old_lp.vars().iter().enumerate() {
        if let Some(k) = split_node(&v.name) {
            index.insert(k, j);
        }
    }
    let mut row_index: HashMap<(&str, usize), usize> = HashMap::with_capacity(old_lp.num_rows());
    for (i, r) in old_lp.rows().iter().enumerate() {
        if let Some(k) = split_node(&r.name) {
            row_index.insert(k, i);
        }
    }
    let mut status = vec![VarStatus::AtLower; n_new + new_lp.num_rows()];
    for (j, v) in new_lp.vars().iter().enumerate() {
        if let Some((prefix, node)) = split_node(&v.name) {
            if let Some(&o) = index.get(&(prefix, map[node])) {
                status[j] = old_basis.status[o];
            }
        }
    }
    for (i, r) in new_lp.rows().iter().enumerate() {
        status[n_new + i] = match split_node(&r.name) {
            Some((prefix, node)) => row_index
                .get(&(prefix, map[node]))
                .map_or(VarStatus::Basic, |&o| old_basis.status[n_old + o]),
            None => VarStatus::Basic,
        };
    }
    Basis { status }
}
