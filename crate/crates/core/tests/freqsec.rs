use freqsuc::coretypes::FreqSecurityParams;
use freqsuc::freqsec::{
    build_nadir_cuts, default_nadir_cuts, min_inertia_for_rocof, nadir_satisfied, required_inertia,
    rocof_satisfied, simulate_frequency, simulate_nadir, FrequencyState, DEFAULT_EFR_GRID, DEFAULT_PFR_GRID,
    DEFAULT_P_LOSS_GRID,
};
use proptest::prelude::*;

const DT: f64 = 1e-4;

fn params() -> FreqSecurityParams {
    FreqSecurityParams::default()
}

fn nadir(s: &FrequencyState) -> f64 {
    simulate_nadir(s, &params(), DT, 30.0).unwrap().nadir
}

/// A response mix whose nadir falls between full EFR and full PFR delivery:
/// `p_loss > efr` and `u < pfr < u * t_pfr / t_efr` with `u = p_loss - efr`.
fn window_mix() -> impl Strategy<Value = (f64, f64, f64)> {
    (500.0..3000.0f64, 0.0..0.9f64, 1.0..9.9f64).prop_map(|(p_loss, efr_frac, k)| {
        let efr = efr_frac * p_loss;
        (efr, k * (p_loss - efr), p_loss)
    })
}

#[test]
fn worked_boundary_state_reaches_the_limit() {
    let s = FrequencyState {
        h: 115_625.0,
        efr: 1000.0,
        pfr: 1000.0,
        p_loss: 1800.0,
    };
    let p = params();
    assert!(nadir_satisfied(&s, &p));
    assert!(!nadir_satisfied(&FrequencyState { h: 115_000.0, ..s }, &p));
    let traj = simulate_frequency(&s, &p, DT, 30.0).unwrap();
    assert!((traj.nadir - 49.2).abs() < 0.01, "{}", traj.nadir);
    assert!(traj.t_nadir > 1.0 && traj.t_nadir < 10.0, "{}", traj.t_nadir);
    // The nadir of the ramp model lies at t_pfr * (p_loss - efr) / pfr.
    assert!((traj.t_nadir - 8.0).abs() < 1e-3);
}

#[test]
fn zero_loss_needs_no_inertia() {
    assert_eq!(min_inertia_for_rocof(0.0, &params()).unwrap(), 0.0);
    let p = FreqSecurityParams {
        rocof_max: 0.0,
        ..params()
    };
    assert!(min_inertia_for_rocof(1800.0, &p).is_err());
}

#[test]
fn full_efr_cover_passes_any_pfr() {
    let p = params();
    let h = min_inertia_for_rocof(1800.0, &p).unwrap();
    for pfr in [0.0, 100.0, 5000.0] {
        let s = FrequencyState {
            h,
            efr: 1800.0,
            pfr,
            p_loss: 1800.0,
        };
        assert!(nadir_satisfied(&s, &p));
        assert!(rocof_satisfied(&s, &p));
    }
}

#[test]
fn cuts_hold_at_grid_corners() {
    let p = params();
    let full = build_nadir_cuts(&p, &DEFAULT_PFR_GRID, &DEFAULT_EFR_GRID, &DEFAULT_P_LOSS_GRID).unwrap();
    for cuts in [full.clone(), default_nadir_cuts(&p)] {
        for &pfr in &DEFAULT_PFR_GRID {
            for &efr in &DEFAULT_EFR_GRID {
                for &p_loss in &DEFAULT_P_LOSS_GRID {
                    let u = p_loss - efr;
                    if u <= 0.0 || u > cuts.ratio_max * pfr {
                        continue;
                    }
                    let h = cuts.required_h(efr, pfr, p_loss);
                    let s = FrequencyState { h, efr, pfr, p_loss };
                    assert!(cuts.satisfied(&s, 1e-9));
                    assert!(nadir_satisfied(&s, &p), "pfr {pfr} efr {efr} loss {p_loss}: h {h}");
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn algebraic_boundary_matches_simulation((efr, pfr, p_loss) in window_mix(), extra in 0.0..1.0f64) {
        let h = required_inertia(efr, pfr, p_loss, &params());
        let at = FrequencyState { h, efr, pfr, p_loss };
        prop_assert!((nadir(&at) - 49.2).abs() < 0.01);
        let above = FrequencyState { h: h * (1.0 + extra), ..at };
        prop_assert!(nadir_satisfied(&above, &params()));
        prop_assert!(nadir(&above) >= 49.19);
        let below = FrequencyState { h: h * 0.99 * (1.0 - 0.5 * extra), ..at };
        prop_assert!(!nadir_satisfied(&below, &params()));
        prop_assert!(nadir(&below) < 49.2);
    }

    #[test]
    fn cuts_are_conservative_inside_their_range(
        p_loss in 500.0..3000.0f64,
        efr_frac in 0.0..0.95f64,
        r_frac in 0.0..1.0f64,
    ) {
        let p = params();
        let full = build_nadir_cuts(&p, &DEFAULT_PFR_GRID, &DEFAULT_EFR_GRID, &DEFAULT_P_LOSS_GRID).unwrap();
        let thin = default_nadir_cuts(&p);
        let efr = efr_frac * p_loss;
        let u = p_loss - efr;
        let pfr = u / (r_frac * thin.ratio_max).max(0.05);
        let exact = required_inertia(efr, pfr, p_loss, &p);
        let fine = full.required_h(efr, pfr, p_loss);
        let coarse = thin.required_h(efr, pfr, p_loss);
        // Coarser cuts only ever ask for more inertia.
        prop_assert!(fine >= exact * (1.0 - 1e-9));
        prop_assert!(coarse >= fine * (1.0 - 1e-9));
        let s = FrequencyState { h: coarse, efr, pfr, p_loss };
        prop_assert!(nadir_satisfied(&s, &p));
    }

    #[test]
    fn nadir_is_monotone(
        (efr, pfr, p_loss) in window_mix(),
        scale in 1.0..2.0f64,
        bump in 1.0..1.3f64,
    ) {
        let h = scale * required_inertia(efr, pfr, p_loss, &params());
        let s = FrequencyState { h, efr, pfr, p_loss };
        let base = simulate_nadir(&s, &params(), 1e-3, 30.0).unwrap().nadir;
        let sim = |s: FrequencyState| simulate_nadir(&s, &params(), 1e-3, 30.0).unwrap().nadir;
        let more_h = sim(FrequencyState { h: h * bump, ..s });
        let more_efr = sim(FrequencyState { efr: efr * bump + 1.0, ..s });
        let more_pfr = sim(FrequencyState { pfr: pfr * bump, ..s });
        let more_loss = sim(FrequencyState { p_loss: p_loss * bump, ..s });
        prop_assert!(more_h >= base - 1e-9);
        prop_assert!(more_efr >= base - 1e-9);
        prop_assert!(more_pfr >= base - 1e-9);
        prop_assert!(more_loss <= base + 1e-9);
    }

    #[test]
    fn initial_rocof_matches_floor_formula(h in 1e3..5e5f64, p_loss in 0.0..3000.0f64) {
        let s = FrequencyState { h, efr: 0.0, pfr: 100.0, p_loss };
        let traj = simulate_nadir(&s, &params(), DT, 1.0).unwrap();
        let expect = 50.0 * p_loss / (2.0 * h);
        prop_assert!((traj.max_rocof - expect).abs() <= 1e-9 * expect.max(1.0));
        // The RoCoF floor is exactly the inertia that gives 1 Hz/s.
        let floor = min_inertia_for_rocof(p_loss, &params()).unwrap();
        prop_assert!((floor - expect * h).abs() <= 1e-9 * floor.max(1.0));
    }
}
