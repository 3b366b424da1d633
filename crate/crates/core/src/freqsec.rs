//! Post-contingency frequency security: RoCoF floor, nadir condition, linear
//! cuts for the optimiser and a time-domain swing-equation oracle.
//!
//! The nadir condition, rearranged for inertia, reads
//! `H >= K * (t_pfr * u^2 / pfr + t_efr * efr)` with `u = p_loss - efr` and
//! `K = f0 / (4 * delta_f_max)`. The right-hand side is convex, so tangent
//! planes would under-estimate it. The cuts here are secants of `r^2` in the
//! ratio `r = u / pfr`: on `[r_a, r_b]`, `u^2 / pfr <= (r_a + r_b) u - r_a r_b pfr`,
//! which is linear and homogeneous in `(u, pfr)` and never below the curve.

use std::io::Write;

use thiserror::Error;

use crate::coretypes::FreqSecurityParams;

#[derive(Debug, Error, PartialEq)]
pub enum FreqError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("system inertia must be positive to integrate the swing equation (got {0})")]
    SingularDynamics(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyState {
    /// Post-loss system inertia, MVA·s.
    pub h: f64,
    pub efr: f64,
    pub pfr: f64,
    pub p_loss: f64,
}

/// Relative slack used when comparing the two sides of the nadir condition.
const NADIR_REL_TOL: f64 = 1e-9;

/// Inertia needed to keep the initial RoCoF within `rocof_max`.
pub fn min_inertia_for_rocof(p_loss: f64, params: &FreqSecurityParams) -> Result<f64, FreqError> {
    if params.rocof_max <= 0.0 || !params.rocof_max.is_finite() {
        return Err(FreqError::InvalidParameter(format!(
            "rocof_max must be positive, got {}",
            params.rocof_max
        )));
    }
    Ok(params.f0 * p_loss / (2.0 * params.rocof_max))
}

/// RoCoF check on a state: `H >= f0 * p_loss / (2 * rocof_max)`.
pub fn rocof_satisfied(state: &FrequencyState, params: &FreqSecurityParams) -> bool {
    match min_inertia_for_rocof(state.p_loss, params) {
        Ok(h_min) => state.h >= h_min - NADIR_REL_TOL * h_min.abs().max(1.0),
        Err(_) => false,
    }
}

/// Inertia required by the nadir condition. Infinite when `pfr = 0` and the
/// loss is not covered by EFR.
pub fn required_inertia(efr: f64, pfr: f64, p_loss: f64, params: &FreqSecurityParams) -> f64 {
    let u = p_loss - efr;
    let k = params.f0 / (4.0 * params.delta_f_max);
    if u <= 0.0 {
        return 0.0;
    }
    if pfr <= 0.0 {
        return f64::INFINITY;
    }
    k * (params.t_pfr * u * u / pfr + params.t_efr * efr)
}

/// Nadir condition. A loss fully covered by EFR only needs the RoCoF floor.
pub fn nadir_satisfied(state: &FrequencyState, params: &FreqSecurityParams) -> bool {
    let u = state.p_loss - state.efr;
    if u <= 0.0 {
        return rocof_satisfied(state, params);
    }
    let four_df = 4.0 * params.delta_f_max;
    let lhs = (state.h / params.f0 - state.efr * params.t_efr / four_df) * state.pfr / params.t_pfr;
    let rhs = u * u / four_df;
    lhs >= rhs - NADIR_REL_TOL * rhs.abs().max(1.0)
}

/// `a_h H + a_efr EFR + a_pfr PFR + a_loss P_Loss >= b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NadirCut {
    pub a_h: f64,
    pub a_efr: f64,
    pub a_pfr: f64,
    pub a_loss: f64,
    pub b: f64,
    /// Grid point `(pfr, efr)` whose loss ratio closes this cut's segment.
    pub grid_pfr: f64,
    pub grid_efr: f64,
}

impl NadirCut {
    /// Left-hand side minus right-hand side at a state.
    pub fn slack(&self, s: &FrequencyState) -> f64 {
        self.a_h * s.h + self.a_efr * s.efr + self.a_pfr * s.pfr + self.a_loss * s.p_loss - self.b
    }

    /// Inertia this cut demands at the given response and loss.
    pub fn required_h(&self, efr: f64, pfr: f64, p_loss: f64) -> f64 {
        (self.b - self.a_efr * efr - self.a_pfr * pfr - self.a_loss * p_loss) / self.a_h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NadirCutSet {
    pub cuts: Vec<NadirCut>,
    /// Largest loss-to-PFR ratio `(p_loss - efr) / pfr` the cuts cover. The
    /// optimiser must add `p_loss - efr <= ratio_max * pfr` when this is
    /// below 1 (above 1 the quasi-steady-state row already implies it).
    pub ratio_max: f64,
    breakpoints: Vec<(f64, f64, f64)>,
}

impl NadirCutSet {
    /// True when every cut holds and the ratio lies inside the covered range.
    pub fn satisfied(&self, s: &FrequencyState, tol: f64) -> bool {
        let u = s.p_loss - s.efr;
        if u > self.ratio_max * s.pfr + tol {
            return false;
        }
        self.cuts.iter().all(|c| c.slack(s) >= -tol)
    }

    /// Largest inertia requirement over the cuts.
    pub fn required_h(&self, efr: f64, pfr: f64, p_loss: f64) -> f64 {
        self.cuts
            .iter()
            .map(|c| c.required_h(efr, pfr, p_loss))
            .fold(0.0, f64::max)
    }

    /// Coarsens the secant segments so consecutive breakpoints are at least
    /// `min_spacing` apart in ratio. The first and last breakpoints are kept,
    /// so the cut set stays conservative over the same ratio range.
    pub fn thinned(&self, params: &FreqSecurityParams, min_spacing: f64) -> NadirCutSet {
        if self.breakpoints.len() <= 2 {
            return self.clone();
        }
        let last = self.breakpoints.len() - 1;
        let mut kept = vec![self.breakpoints[0]];
        for (i, bp) in self.breakpoints.iter().enumerate().skip(1) {
            let prev = kept.last().unwrap().0;
            if i == last {
                if bp.0 - prev < min_spacing && kept.len() > 1 {
                    kept.pop();
                }
                kept.push(*bp);
            } else if bp.0 - prev >= min_spacing {
                kept.push(*bp);
            }
        }
        from_breakpoints(params, kept)
    }
}

fn check_grid(name: &str, g: &[f64]) -> Result<(), FreqError> {
    if g.is_empty() {
        return Err(FreqError::InvalidParameter(format!("{name} grid is empty")));
    }
    if g.iter().any(|x| !x.is_finite()) || g.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FreqError::InvalidParameter(format!(
            "{name} grid must be finite and strictly increasing"
        )));
    }
    Ok(())
}

fn from_breakpoints(params: &FreqSecurityParams, bps: Vec<(f64, f64, f64)>) -> NadirCutSet {
    let k = params.f0 / (4.0 * params.delta_f_max);
    let cuts = bps
        .windows(2)
        .map(|w| {
            let (ra, rb) = (w[0].0, w[1].0);
            let slope = k * params.t_pfr * (ra + rb);
            NadirCut {
                a_h: 1.0,
                a_efr: slope - k * params.t_efr,
                a_pfr: k * params.t_pfr * ra * rb,
                a_loss: -slope,
                b: 0.0,
                grid_pfr: w[1].1,
                grid_efr: w[1].2,
            }
        })
        .collect();
    NadirCutSet {
        cuts,
        ratio_max: bps.last().map_or(0.0, |b| b.0),
        breakpoints: bps,
    }
}

/// Secant cuts over the loss ratios spanned by the grid. Only grid points with
/// `p_loss > efr` contribute; ratios beyond the first one reaching 1 are
/// dropped since the quasi-steady-state condition caps the ratio at 1.
pub fn build_nadir_cuts(
    params: &FreqSecurityParams,
    pfr_grid: &[f64],
    efr_grid: &[f64],
    p_loss_grid: &[f64],
) -> Result<NadirCutSet, FreqError> {
    check_grid("pfr", pfr_grid)?;
    check_grid("efr", efr_grid)?;
    check_grid("p_loss", p_loss_grid)?;
    if pfr_grid[0] <= 0.0 {
        return Err(FreqError::InvalidParameter(
            "pfr grid values must be positive".into(),
        ));
    }
    let mut bps: Vec<(f64, f64, f64)> = vec![(0.0, f64::NAN, f64::NAN)];
    for &pfr in pfr_grid {
        for &efr in efr_grid {
            for &pl in p_loss_grid {
                if pl > efr {
                    bps.push(((pl - efr) / pfr, pfr, efr));
                }
            }
        }
    }
    bps.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
    });
    bps.dedup_by(|b, a| b.0 - a.0 <= 1e-12 * a.0.max(1.0));
    if let Some(first_over) = bps.iter().position(|b| b.0 >= 1.0) {
        bps.truncate(first_over + 1);
    }
    Ok(from_breakpoints(params, bps))
}

pub const DEFAULT_PFR_GRID: [f64; 10] = [
    250.0, 500.0, 750.0, 1000.0, 1250.0, 1500.0, 1750.0, 2000.0, 2250.0, 2500.0,
];
pub const DEFAULT_EFR_GRID: [f64; 9] = [
    0.0, 250.0, 500.0, 750.0, 1000.0, 1250.0, 1500.0, 1750.0, 2000.0,
];
pub const DEFAULT_P_LOSS_GRID: [f64; 4] = [900.0, 1350.0, 1800.0, 2800.0];
/// Ratio spacing used when thinning the default cut set for the optimiser.
pub const DEFAULT_CUT_SPACING: f64 = 0.1;

/// Cuts from the default grids, thinned to [`DEFAULT_CUT_SPACING`].
pub fn default_nadir_cuts(params: &FreqSecurityParams) -> NadirCutSet {
    build_nadir_cuts(params, &DEFAULT_PFR_GRID, &DEFAULT_EFR_GRID, &DEFAULT_P_LOSS_GRID)
        .expect("default grids are valid")
        .thinned(params, DEFAULT_CUT_SPACING)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `(t, f)` samples; empty when recording is off.
    pub samples: Vec<(f64, f64)>,
    pub nadir: f64,
    pub max_rocof: f64,
    pub t_nadir: f64,
}

fn integrate(
    s: &FrequencyState,
    p: &FreqSecurityParams,
    dt: f64,
    t_end: f64,
    record: bool,
) -> Result<Trajectory, FreqError> {
    if s.h <= 0.0 || !s.h.is_finite() {
        return Err(FreqError::SingularDynamics(s.h));
    }
    if dt <= 0.0 || !dt.is_finite() || t_end < 0.0 {
        return Err(FreqError::InvalidParameter(format!(
            "need dt > 0 and t_end >= 0 (dt={dt}, t_end={t_end})"
        )));
    }
    let gain = p.f0 / (2.0 * s.h);
    let response = |t: f64| {
        s.efr * (t / p.t_efr).min(1.0) + s.pfr * (t / p.t_pfr).min(1.0)
    };
    let dfdt = |t: f64| gain * (response(t) - s.p_loss);

    let mut f = p.f0;
    let mut t = 0.0;
    let mut traj = Trajectory {
        samples: Vec::new(),
        nadir: f,
        max_rocof: dfdt(0.0).abs(),
        t_nadir: 0.0,
    };
    if record {
        traj.samples.push((t, f));
    }
    let steps = (t_end / dt).round() as usize;
    for k in 0..steps {
        if dfdt(t) >= 0.0 {
            break;
        }
        // Classical RK4; the right-hand side depends on time only.
        let k1 = dfdt(t);
        let k2 = dfdt(t + 0.5 * dt);
        let k4 = dfdt(t + dt);
        f += dt / 6.0 * (k1 + 4.0 * k2 + k4);
        t = (k + 1) as f64 * dt;
        traj.max_rocof = traj.max_rocof.max(k4.abs());
        if f < traj.nadir {
            traj.nadir = f;
            traj.t_nadir = t;
        }
        if record {
            traj.samples.push((t, f));
        }
    }
    Ok(traj)
}

/// Integrates `(2H/f0) df/dt = -p_loss + R(t)` with linear-ramp EFR and PFR
/// delivery until `t_end` or until the frequency turns upwards.
pub fn simulate_frequency(
    state: &FrequencyState,
    params: &FreqSecurityParams,
    dt: f64,
    t_end: f64,
) -> Result<Trajectory, FreqError> {
    integrate(state, params, dt, t_end, true)
}

/// As [`simulate_frequency`] without storing samples.
pub fn simulate_nadir(
    state: &FrequencyState,
    params: &FreqSecurityParams,
    dt: f64,
    t_end: f64,
) -> Result<Trajectory, FreqError> {
    integrate(state, params, dt, t_end, false)
}

/// Two-column `t f` text dump for plotting.
pub fn write_trajectory<W: Write>(traj: &Trajectory, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# t_s f_hz")?;
    for (t, f) in &traj.samples {
        writeln!(w, "{t} {f}")?;
    }
    Ok(())
}
