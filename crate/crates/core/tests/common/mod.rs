//! Toy cases and an exhaustive-enumeration oracle for small unit-commitment
//! instances, shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use freqsuc::coretypes::{FreqSecurityParams, SystemCase, ThermalUnit};
use freqsuc::freqsec::default_nadir_cuts;
use freqsuc::scenario::{build_tree, ForecastErrorModel, ScenarioTree};
use freqsuc::ucmodel::{assemble, InitialState, UcModel, UcOptions};
use freqsuc_lp::{solve_lp, solve_mip, SolveOutcome, SolveStatus, Tolerances};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn unit(name: &str, p_max: f64, p_msg: f64, cost_marginal: f64) -> ThermalUnit {
    ThermalUnit {
        name: name.into(),
        count: 1,
        p_max,
        p_msg,
        ramp_rate: p_max,
        cost_noload: 0.0,
        cost_marginal,
        cost_startup: 0.0,
        t_startup: 0,
        t_min_up: 0,
        t_min_down: 0,
        inertia_const: 5.0,
        pfr_max: 0.0,
        must_run: false,
    }
}

pub fn toy_case(thermal: Vec<ThermalUnit>, demand: Vec<f64>, res: Vec<f64>) -> SystemCase {
    SystemCase {
        name: "toy".into(),
        thermal,
        storage: vec![],
        demand,
        res_forecast: res,
        voll: 1000.0,
        freq: FreqSecurityParams::default(),
        efr_procured_cap: 0.0,
        secured: false,
    }
}

/// A seeded instance with one to three single units, two to four steps, no
/// storage and ramp rates that never bind.
pub fn random_instance(seed: u64) -> SystemCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let units = rng.random_range(1..=3);
    let steps = rng.random_range(2..=4);
    let mut thermal = Vec::new();
    for i in 0..units {
        let p_max: f64 = rng.random_range(50.0..300.0);
        let mut u = unit(
            &format!("u{i}"),
            p_max,
            p_max * rng.random_range(0.0..0.6),
            rng.random_range(10.0..100.0),
        );
        u.cost_noload = rng.random_range(0.0..2000.0);
        u.cost_startup = rng.random_range(0.0..5000.0);
        u.t_startup = rng.random_range(0..=1);
        u.t_min_up = rng.random_range(0..=2);
        u.t_min_down = rng.random_range(0..=2);
        thermal.push(u);
    }
    let cap: f64 = thermal.iter().map(|u| u.p_max).sum();
    let demand = (0..steps).map(|_| rng.random_range(0.0..1.1 * cap)).collect();
    let res = (0..steps)
        .map(|_| if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.5 * cap) })
        .collect();
    toy_case(thermal, demand, res)
}

/// Start-up and shut-down sequences of one unit that the commitment logic
/// admits from a cold start, with their commitment path.
fn unit_schedules(u: &ThermalUnit, steps: usize) -> Vec<(Vec<u8>, Vec<u8>, Vec<u8>)> {
    let tst = u.t_startup as usize;
    let mut out = Vec::new();
    for mask in 0u32..(1 << (2 * steps)) {
        let st: Vec<u8> = (0..steps).map(|t| ((mask >> t) & 1) as u8).collect();
        let sd: Vec<u8> = (0..steps).map(|t| ((mask >> (steps + t)) & 1) as u8).collect();
        let back = |v: &[u8], t: usize, k: usize| if k <= t { v[t - k] as i32 } else { 0 };
        let mut y = vec![0u8; steps];
        let mut ok = true;
        let mut prev = 0i32;
        for t in 0..steps {
            let synced = if tst == 0 { st[t] as i32 } else { back(&st, t, tst) };
            let now = prev + synced - sd[t] as i32;
            if !(0..=1).contains(&now) {
                ok = false;
                break;
            }
            let recent_down: i32 = (1..=u.t_min_down as usize).map(|k| back(&sd, t, k)).sum();
            if st[t] as i32 > 1 - prev - recent_down {
                ok = false;
                break;
            }
            let recent_up: i32 = (1..=u.t_min_up as usize).map(|k| back(&st, t, k + tst)).sum();
            if sd[t] as i32 > prev - recent_up {
                ok = false;
                break;
            }
            y[t] = now as u8;
            prev = now;
        }
        if ok {
            out.push((st, sd, y));
        }
    }
    out
}

/// Cheapest dispatch of one step given the committed set, by merit order.
/// `None` when the committed minimum output exceeds what curtailment absorbs.
fn dispatch_cost(case: &SystemCase, t: usize, on: &[bool]) -> Option<f64> {
    let net = case.demand[t] - case.res_forecast[t];
    let mut cost = 0.0;
    let mut floor = 0.0;
    let mut room = Vec::new();
    for (u, &o) in case.thermal.iter().zip(on) {
        if o {
            cost += u.cost_noload + u.cost_marginal * u.p_msg;
            floor += u.p_msg;
            room.push((u.cost_marginal, u.p_max - u.p_msg));
        }
    }
    if floor > net {
        return (floor - net <= case.res_forecast[t] + 1e-9).then_some(cost);
    }
    let mut left = net - floor;
    room.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (c, r) in room {
        let p = left.min(r);
        cost += c * p;
        left -= p;
    }
    Some(cost + case.voll * left)
}

/// Optimal cost of a thermal-only, single-path case by enumerating every
/// admissible commitment schedule.
pub fn brute_force_cost(case: &SystemCase) -> Option<f64> {
    let steps = case.demand.len();
    let per_unit: Vec<_> = case.thermal.iter().map(|u| unit_schedules(u, steps)).collect();
    let mut best: Option<f64> = None;
    let mut idx = vec![0usize; per_unit.len()];
    loop {
        let mut cost = 0.0;
        for (i, &k) in idx.iter().enumerate() {
            let starts: u8 = per_unit[i][k].0.iter().sum();
            cost += case.thermal[i].cost_startup * starts as f64;
        }
        let mut feasible = true;
        for t in 0..steps {
            let on: Vec<bool> = idx.iter().enumerate().map(|(i, &k)| per_unit[i][k].2[t] == 1).collect();
            match dispatch_cost(case, t, &on) {
                Some(c) => cost += c,
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if feasible && best.is_none_or(|b| cost < b) {
            best = Some(cost);
        }
        // Odometer over the per-unit schedule lists.
        let mut i = 0;
        loop {
            if i == idx.len() {
                return best;
            }
            idx[i] += 1;
            if idx[i] < per_unit[i].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

pub fn single_path(case: &SystemCase) -> ScenarioTree {
    let cap = case.res_forecast.iter().copied().fold(0.0, f64::max);
    build_tree(&case.res_forecast, &ForecastErrorModel::deterministic(cap), case.demand.len())
        .expect("valid forecast")
}

pub fn energy_options(steps: usize, relax: bool) -> UcOptions {
    UcOptions {
        relax_binaries: relax,
        horizon_steps: steps,
        include_frequency_constraints: false,
        ..UcOptions::default()
    }
}

/// Builds and solves a case over its whole series from a cold start.
pub fn solve_case(case: &SystemCase, opts: &UcOptions) -> (UcModel, ScenarioTree, SolveOutcome) {
    let tree = single_path(case);
    let cuts = default_nadir_cuts(&case.freq);
    let model = assemble(case, &tree, opts, &cuts, &InitialState::cold(case), 0).expect("model builds");
    let tol = Tolerances::default();
    let out = if opts.relax_binaries {
        solve_lp(&model.lp, &tol)
    } else {
        solve_mip(&model.lp, &tol)
    }
    .expect("solver runs");
    (model, tree, out)
}

/// Optimal objective of the binary model, or `None` when infeasible.
pub fn mip_cost(case: &SystemCase) -> Option<f64> {
    let (_, _, out) = solve_case(case, &energy_options(case.demand.len(), false));
    match out.status {
        SolveStatus::Optimal => Some(out.objective),
        SolveStatus::Infeasible => None,
        s => panic!("unexpected solver status {s}"),
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
