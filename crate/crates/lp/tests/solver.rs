use freqsuc_lp::mps::{read_mps, write_mps};
use freqsuc_lp::{
    solve_lp, solve_mip, write_solution, BundledSolver, LinearProgram, LpBackend, Relation,
    SolveStatus, Tolerances,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense LP: minimise c.x subject to rows and finite boxes.
#[derive(Debug, Clone)]
struct Dense {
    c: Vec<f64>,
    rows: Vec<(Vec<f64>, Relation, f64)>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Dense {
    fn to_lp(&self) -> LinearProgram {
        let mut lp = LinearProgram::new("dense");
        let vars: Vec<_> = (0..self.c.len())
            .map(|j| lp.add_var(format!("x{j}"), self.lo[j], self.hi[j], self.c[j]))
            .collect();
        for (i, (a, rel, b)) in self.rows.iter().enumerate() {
            lp.add_row(
                format!("r{i}"),
                a.iter().enumerate().map(|(j, &v)| (vars[j], v)),
                *rel,
                *b,
            );
        }
        lp
    }
}

fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k].abs() < 1e-9 {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    Some(x)
}

/// Optimum by enumerating every vertex of the (bounded) polytope.
fn vertex_oracle(d: &Dense) -> Option<f64> {
    let n = d.c.len();
    let mut ineqs = Vec::new();
    for (a, rel, b) in &d.rows {
        if a.iter().all(|&v| v == 0.0) {
            let ok = match rel {
                Relation::Le => 0.0 <= *b,
                Relation::Ge => 0.0 >= *b,
                Relation::Eq => *b == 0.0,
            };
            if !ok {
                return None;
            }
            continue;
        }
        match rel {
            Relation::Eq => {
                ineqs.push((a.clone(), *b));
                ineqs.push((a.iter().map(|v| -v).collect(), -b));
            }
            Relation::Le => ineqs.push((a.clone(), *b)),
            Relation::Ge => ineqs.push((a.iter().map(|v| -v).collect(), -b)),
        }
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        ineqs.push((e.clone(), d.hi[j]));
        e[j] = -1.0;
        ineqs.push((e, -d.lo[j]));
    }
    let k = n;
    let feasible = |x: &[f64]| {
        d.rows.iter().all(|(a, rel, b)| {
            let act: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
            match rel {
                Relation::Le => act <= b + 1e-7,
                Relation::Ge => act >= b - 1e-7,
                Relation::Eq => (act - b).abs() <= 1e-7,
            }
        }) && x
            .iter()
            .enumerate()
            .all(|(j, &v)| v >= d.lo[j] - 1e-7 && v <= d.hi[j] + 1e-7)
    };
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let mut a: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut b: Vec<f64> = Vec::with_capacity(k);
        for &i in &idx {
            a.push(ineqs[i].0.clone());
            b.push(ineqs[i].1);
        }
        if let Some(x) = gauss(a, b) {
            if feasible(&x) {
                let obj: f64 = d.c.iter().zip(&x).map(|(p, q)| p * q).sum();
                best = Some(best.map_or(obj, |o: f64| o.min(obj)));
            }
        }
        // next combination
        let m = ineqs.len();
        let mut i = k;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < m - k + i {
                idx[i] += 1;
                for t in i + 1..k {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
        if k == 0 {
            return best;
        }
    }
}

fn random_dense(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Dense {
    let c = (0..n).map(|_| rng.random_range(-5i32..=5) as f64).collect();
    let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-3i32..=0) as f64).collect();
    let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(1i32..=6) as f64).collect();
    let rows = (0..m)
        .map(|_| {
            let a: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        0.0
                    } else {
                        rng.random_range(-4i32..=4) as f64
                    }
                })
                .collect();
            let rel = match rng.random_range(0..5) {
                0 => Relation::Eq,
                1 | 2 => Relation::Ge,
                _ => Relation::Le,
            };
            let b = rng.random_range(-6i32..=6) as f64;
            (a, rel, b)
        })
        .collect();
    Dense { c, rows, lo, hi }
}

#[test]
fn minimize_negative_x() {
    let mut lp = LinearProgram::new("t");
    let x = lp.add_var("x", 0.0, 1.0, -1.0);
    let out = solve_lp(&lp, &Tolerances::default()).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    assert_eq!(out.value(x), 1.0);
    assert_eq!(out.objective, -1.0);
}

#[test]
fn two_variable_corner() {
    // max 3x + 2y, x + y <= 4, x + 3y <= 6, x <= 3: corner (3, 1).
    let mut lp = LinearProgram::new("t");
    let x = lp.add_var("x", 0.0, 3.0, -3.0);
    let y = lp.add_var("y", 0.0, f64::INFINITY, -2.0);
    lp.add_row("a", [(x, 1.0), (y, 1.0)], Relation::Le, 4.0);
    lp.add_row("b", [(x, 1.0), (y, 3.0)], Relation::Le, 6.0);
    let out = solve_lp(&lp, &Tolerances::default()).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.value(x) - 3.0).abs() < 1e-12);
    assert!((out.value(y) - 1.0).abs() < 1e-12);
    assert!((out.objective + 11.0).abs() < 1e-12);
    // The corner is degenerate (three active constraints), so check the
    // dual certificate rather than particular multipliers.
    assert!(out.duals.iter().all(|&y| y <= 1e-12));
    assert!((out.dual_objective(&lp) + 11.0).abs() < 1e-9);
}

#[test]
fn knapsack_matches_enumeration() {
    let values = [10.0, 13.0, 7.0];
    let weights = [3.0, 4.0, 2.0];
    let cap = 6.0;
    let mut lp = LinearProgram::new("knap");
    let x: Vec<_> = (0..3)
        .map(|i| lp.add_binary(format!("x{i}"), -values[i]))
        .collect();
    lp.add_row("cap", x.iter().zip(weights).map(|(&v, w)| (v, w)), Relation::Le, cap);
    let out = solve_mip(&lp, &Tolerances::default()).unwrap();
    let mut best = 0.0f64;
    for mask in 0..8u32 {
        let w: f64 = (0..3).filter(|i| mask >> i & 1 == 1).map(|i| weights[i]).sum();
        if w <= cap {
            best = best.max((0..3).filter(|i| mask >> i & 1 == 1).map(|i| values[i]).sum());
        }
    }
    assert_eq!(out.status, SolveStatus::Optimal);
    assert_eq!(out.objective, -best);
    assert!(out.best_bound <= out.objective + 1e-9);
    assert!(out.best_bound >= out.objective - 1e-6 * out.objective.abs());
}

#[test]
fn mip_without_integers_equals_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = random_dense(&mut rng, 5, 4);
    let lp = d.to_lp();
    let a = solve_lp(&lp, &Tolerances::default()).unwrap();
    let b = solve_mip(&lp, &Tolerances::default()).unwrap();
    assert_eq!(a.status, b.status);
    assert_eq!(a.primal, b.primal);
}

#[test]
fn detects_infeasible_and_unbounded() {
    let mut lp = LinearProgram::new("inf");
    let x = lp.add_var("x", 0.0, 10.0, 1.0);
    lp.add_row("a", [(x, 1.0)], Relation::Ge, 2.0);
    lp.add_row("b", [(x, 1.0)], Relation::Le, 1.0);
    assert_eq!(solve_lp(&lp, &Tolerances::default()).unwrap().status, SolveStatus::Infeasible);

    let mut lp = LinearProgram::new("unb");
    let x = lp.add_var("x", 0.0, f64::INFINITY, -1.0);
    let y = lp.add_var("y", 0.0, f64::INFINITY, 0.0);
    lp.add_row("a", [(x, 1.0), (y, -1.0)], Relation::Le, 1.0);
    assert_eq!(solve_lp(&lp, &Tolerances::default()).unwrap().status, SolveStatus::Unbounded);
}

#[test]
fn free_variable_and_equalities() {
    // min z with z free, z = x - y, x + y = 4, x in [0,1].
    let mut lp = LinearProgram::new("free");
    let x = lp.add_var("x", 0.0, 1.0, 0.0);
    let y = lp.add_var("y", 0.0, f64::INFINITY, 0.0);
    let z = lp.add_var("z", f64::NEG_INFINITY, f64::INFINITY, 1.0);
    lp.add_row("def", [(z, 1.0), (x, -1.0), (y, 1.0)], Relation::Eq, 0.0);
    lp.add_row("sum", [(x, 1.0), (y, 1.0)], Relation::Eq, 4.0);
    let out = solve_lp(&lp, &Tolerances::default()).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.value(z) + 4.0).abs() < 1e-9);
}

#[test]
fn random_lps_match_vertex_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut optimal = 0;
    for _ in 0..300 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(0..=4);
        let d = random_dense(&mut rng, n, m);
        let out = solve_lp(&d.to_lp(), &Tolerances::default()).unwrap();
        match vertex_oracle(&d) {
            Some(obj) => {
                optimal += 1;
                assert_eq!(out.status, SolveStatus::Optimal, "{d:?}");
                assert!((out.objective - obj).abs() < 1e-7 * (1.0 + obj.abs()), "{d:?}");
            }
            None => assert_eq!(out.status, SolveStatus::Infeasible, "{d:?}"),
        }
    }
    assert!(optimal > 100);
}

fn transport(rng: &mut ChaCha8Rng, s: usize, t: usize) -> LinearProgram {
    let mut lp = LinearProgram::new("transport");
    let supply: Vec<f64> = (0..s).map(|_| rng.random_range(50.0..150.0)).collect();
    let total: f64 = supply.iter().sum();
    let demand: Vec<f64> = (0..t).map(|_| rng.random_range(0.5..1.0) * total / t as f64).collect();
    let mut x = vec![vec![]; s];
    for (i, row) in x.iter_mut().enumerate() {
        for j in 0..t {
            row.push(lp.add_var(format!("x{i}_{j}"), 0.0, f64::INFINITY, rng.random_range(1.0..20.0)));
        }
        let _ = i;
    }
    for (i, row) in x.iter().enumerate() {
        lp.add_row(format!("s{i}"), row.iter().map(|&v| (v, 1.0)), Relation::Le, supply[i]);
    }
    for (j, d) in demand.iter().enumerate() {
        lp.add_row(format!("d{j}"), x.iter().map(|r| (r[j], 1.0)), Relation::Ge, *d);
    }
    lp
}

#[test]
fn strong_duality_on_transport_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let lp = transport(&mut rng, 12, 20);
        let out = solve_lp(&lp, &Tolerances::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!(lp.max_violation(&out.primal) < 1e-7);
        let dual = out.dual_objective(&lp);
        assert!((dual - out.objective).abs() <= 1e-6 * out.objective.abs().max(1.0));
        for (row, y) in lp.rows().iter().zip(&out.duals) {
            match row.relation {
                Relation::Le => assert!(*y <= 1e-9),
                Relation::Ge => assert!(*y >= -1e-9),
                Relation::Eq => {}
            }
        }
    }
}

#[test]
fn deterministic_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let lp = transport(&mut rng, 10, 15);
    let a = solve_lp(&lp, &Tolerances::default()).unwrap();
    let b = solve_lp(&lp, &Tolerances::default()).unwrap();
    assert_eq!(a.primal, b.primal);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
}

#[test]
fn cost_scaling_scales_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let lp = transport(&mut rng, 8, 9);
    let mut scaled = lp.clone();
    for j in 0..scaled.num_vars() {
        scaled.var_mut(freqsuc_lp::VarId(j)).cost *= 8.0;
    }
    let a = solve_lp(&lp, &Tolerances::default()).unwrap();
    let b = solve_lp(&scaled, &Tolerances::default()).unwrap();
    assert!((b.objective - 8.0 * a.objective).abs() < 1e-9 * b.objective.abs());
    assert_eq!(a.primal, b.primal);
}

#[test]
fn warm_started_backend_reproduces_cold_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let base = transport(&mut rng, 10, 12);
    let mut solver = BundledSolver::new(Tolerances::default()).with_basis_reuse(true);
    solver.solve(&base).unwrap();
    let mut shifted = base.clone();
    for i in 0..shifted.num_rows() {
        let r = shifted.row_mut(freqsuc_lp::RowId(i));
        r.rhs *= 0.97;
    }
    let warm = solver.solve(&shifted).unwrap();
    let cold = solve_lp(&shifted, &Tolerances::default()).unwrap();
    assert_eq!(warm.status, SolveStatus::Optimal);
    assert!((warm.objective - cold.objective).abs() < 1e-7 * cold.objective.abs());
}

#[test]
fn mixed_binary_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..40 {
        let d = random_dense(&mut rng, 4, 3);
        let mut lp = d.to_lp();
        // first two columns binary
        for j in 0..2 {
            lp.set_bounds(freqsuc_lp::VarId(j), 0.0, 1.0);
            lp.set_integer(freqsuc_lp::VarId(j), true);
        }
        let out = solve_mip(&lp, &Tolerances::default()).unwrap();
        let mut best: Option<f64> = None;
        for mask in 0..4u32 {
            let mut fixed = d.clone();
            for j in 0..2 {
                let v = (mask >> j & 1) as f64;
                fixed.lo[j] = v;
                fixed.hi[j] = v;
            }
            if let Some(o) = vertex_oracle(&fixed) {
                best = Some(best.map_or(o, |b: f64| b.min(o)));
            }
        }
        match best {
            Some(b) => {
                assert_eq!(out.status, SolveStatus::Optimal);
                assert!((out.objective - b).abs() < 1e-7 * (1.0 + b.abs()));
                for j in 0..2 {
                    assert_eq!(out.primal[j].fract(), 0.0);
                }
            }
            None => assert_eq!(out.status, SolveStatus::Infeasible),
        }
    }
}

#[test]
fn mps_file_round_trip_solves_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let lp = transport(&mut rng, 5, 6);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.mps");
    write_mps(&lp, std::fs::File::create(&path).unwrap()).unwrap();
    let back = read_mps(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    let a = solve_lp(&lp, &Tolerances::default()).unwrap();
    let b = solve_lp(&back, &Tolerances::default()).unwrap();
    assert_eq!(a.primal, b.primal);

    let mut text = Vec::new();
    write_solution(&lp, &a, &mut text).unwrap();
    let text = String::from_utf8(text).unwrap();
    assert!(text.starts_with("# status optimal"));
    assert_eq!(text.lines().count(), 2 + lp.num_vars());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn prop_matches_oracle(seed in 0u64..1_000_000, n in 1usize..=4, m in 0usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dense(&mut rng, n, m);
        let out = solve_lp(&d.to_lp(), &Tolerances::default()).unwrap();
        match vertex_oracle(&d) {
            Some(obj) => {
                prop_assert_eq!(out.status, SolveStatus::Optimal);
                prop_assert!((out.objective - obj).abs() < 1e-7 * (1.0 + obj.abs()));
                prop_assert!(d.to_lp().max_violation(&out.primal) < 1e-7);
            }
            None => prop_assert_eq!(out.status, SolveStatus::Infeasible),
        }
    }
}

/// Sparse random LP built around a known feasible point; integral data and
/// mostly tight rows make it heavily degenerate.
fn sparse_feasible(rng: &mut ChaCha8Rng, m: usize, n: usize) -> LinearProgram {
    let mut lp = LinearProgram::new("sparse");
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0..10) as f64).collect();
    let vars: Vec<_> = (0..n)
        .map(|j| {
            let (lo, hi) = match j % 4 {
                0 => (0.0, f64::INFINITY),
                1 => (0.0, 10.0 + rng.random_range(0.0..5.0)),
                2 => (f64::NEG_INFINITY, 20.0),
                _ => (f64::NEG_INFINITY, f64::INFINITY),
            };
            lp.add_var(format!("x{j}"), lo, hi.round(), rng.random_range(-1..3) as f64)
        })
        .collect();
    for i in 0..m {
        let k = rng.random_range(2..6);
        let terms: Vec<_> = (0..k)
            .map(|_| (vars[rng.random_range(0..n)], rng.random_range(-5.0..5.0f64).round()))
            .collect();
        let act: f64 = terms.iter().map(|&(v, a)| a * x0[v.0]).sum();
        let rel = match i % 3 {
            0 => Relation::Le,
            1 => Relation::Ge,
            _ => Relation::Eq,
        };
        let slack = if rng.random_bool(0.7) { 0.0 } else { rng.random_range(0.0..3.0f64).round() };
        let rhs = match rel {
            Relation::Le => act + slack,
            Relation::Ge => act - slack,
            Relation::Eq => act,
        };
        lp.add_row(format!("r{i}"), terms, rel, rhs);
    }
    // Keep the problem bounded: box the free directions through a budget row.
    lp.add_row(
        "budget",
        vars.iter().map(|&v| (v, 1.0)),
        Relation::Le,
        x0.iter().sum::<f64>() + 50.0,
    );
    for (j, &v) in vars.iter().enumerate() {
        if j % 4 >= 2 {
            lp.add_row(format!("floor{j}"), [(v, 1.0)], Relation::Ge, -100.0);
        }
    }
    lp
}

#[test]
fn sparse_random_lps_certify() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..30 {
        let lp = sparse_feasible(&mut rng, 150, 200);
        let out = solve_lp(&lp, &Tolerances::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!(lp.max_violation(&out.primal) < 1e-6);
        let gap = (out.dual_objective(&lp) - out.objective).abs();
        assert!(gap <= 1e-6 * out.objective.abs().max(1.0), "gap {gap}");
    }
}


