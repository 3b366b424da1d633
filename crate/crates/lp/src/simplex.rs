//! Bounded revised simplex.
//!
//! The LP is brought into the computational form `A x - s = 0` with one
//! logical `s_i` per row carrying the row bounds. Every column then has simple
//! bounds and the all-logical basis is always available. Phase two runs the
//! dual simplex with a bound-flipping ratio test; a primal pass removes any
//! cost shifts introduced to keep the dual feasible.

use std::time::Instant;

use crate::lu::{LuFactors, SparseCols};
use crate::model::{LinearProgram, Relation};
use crate::scaling::Scaling;
use crate::{LpError, SolveStatus, Tolerances};

const NONE: usize = usize::MAX;
/// Stand-in bound for columns that start on an infinite side, in scaled units.
const ARTIFICIAL_BOUND: f64 = 1e9;
fn artificial_magnitude(other_bound: f64) -> f64 {
    if other_bound.is_finite() {
        ARTIFICIAL_BOUND.max(other_bound.abs() * 2.0 + 1.0)
    } else {
        ARTIFICIAL_BOUND
    }
}

const REFACTOR_EVERY: usize = 80;
/// Consecutive non-improving iterations before switching to Bland's rule.
const STALL_LIMIT: usize = 60;
/// Iterations of progress needed to leave Bland mode again.
const BLAND_RELEASE: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free column resting at zero.
    Free,
}

/// Basis description over structural columns followed by row logicals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    pub status: Vec<VarStatus>,
}

/// The scaled computational form shared by repeated solves (e.g. B&B nodes).
#[derive(Debug, Clone)]
pub(crate) struct Standard {
    pub n: usize,
    pub m: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    row_start: Vec<usize>,
    row_col: Vec<usize>,
    row_val: Vec<f64>,
    /// Scaled bounds for structurals and logicals.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    cost: Vec<f64>,
    scaling: Scaling,
    cost_scale: f64,
    offset: f64,
}

impl Standard {
    pub fn from_lp(lp: &LinearProgram) -> Result<Self, LpError> {
        lp.validate()?;
        let n = lp.num_vars();
        let m = lp.num_rows();
        let mut triplets = Vec::with_capacity(lp.num_nonzeros());
        for (i, row) in lp.rows().iter().enumerate() {
            for &(v, a) in &row.terms {
                triplets.push((i, v.0, a));
            }
        }
        let scaling = Scaling::compute(m, n, &triplets);

        let mut col_count = vec![0usize; n];
        for &(_, j, _) in &triplets {
            col_count[j] += 1;
        }
        let mut col_start = vec![0usize; n + 1];
        for j in 0..n {
            col_start[j + 1] = col_start[j] + col_count[j];
        }
        let mut fill = col_start.clone();
        let mut col_row = vec![0usize; triplets.len()];
        let mut col_val = vec![0.0; triplets.len()];
        let mut row_start = vec![0usize; m + 1];
        let mut row_col = Vec::with_capacity(triplets.len());
        let mut row_val = Vec::with_capacity(triplets.len());
        for (i, row) in lp.rows().iter().enumerate() {
            for &(v, a) in &row.terms {
                let j = v.0;
                let s = a * scaling.row[i] * scaling.col[j];
                col_row[fill[j]] = i;
                col_val[fill[j]] = s;
                fill[j] += 1;
                row_col.push(j);
                row_val.push(s);
            }
            row_start[i + 1] = row_col.len();
        }

        let mut lower = Vec::with_capacity(n + m);
        let mut upper = Vec::with_capacity(n + m);
        let mut cost = Vec::with_capacity(n + m);
        for (j, v) in lp.vars().iter().enumerate() {
            lower.push(v.lower / scaling.col[j]);
            upper.push(v.upper / scaling.col[j]);
            cost.push(v.cost * scaling.col[j]);
        }
        let cmax = cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let cost_scale = if cmax > 0.0 {
            2f64.powi((1.0 / cmax).log2().round() as i32)
        } else {
            1.0
        };
        for c in cost.iter_mut() {
            *c *= cost_scale;
        }
        for (i, row) in lp.rows().iter().enumerate() {
            let b = row.rhs * scaling.row[i];
            let (lo, hi) = match row.relation {
                Relation::Le => (f64::NEG_INFINITY, b),
                Relation::Ge => (b, f64::INFINITY),
                Relation::Eq => (b, b),
            };
            lower.push(lo);
            upper.push(hi);
            cost.push(0.0);
        }
        Ok(Self {
            n,
            m,
            col_start,
            col_row,
            col_val,
            row_start,
            row_col,
            row_val,
            lower,
            upper,
            cost,
            scaling,
            cost_scale,
            offset: lp.objective_offset(),
        })
    }

    /// Scaled bounds of structural `j` given original-unit bounds.
    pub fn scale_bounds(&self, j: usize, lo: f64, hi: f64) -> (f64, f64) {
        let c = self.scaling.col[j];
        (lo / c, hi / c)
    }

    fn for_column(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for k in self.col_start[j]..self.col_start[j + 1] {
                f(self.col_row[k], self.col_val[k]);
            }
        } else {
            f(j - self.n, -1.0);
        }
    }
}

/// Result of a single engine run in original units.
#[derive(Debug, Clone)]
pub(crate) struct EngineResult {
    pub status: SolveStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
    pub basis: Basis,
    pub max_scaled_residual: f64,
}

#[derive(Default)]
struct Etas {
    pos: Vec<usize>,
    pivot: Vec<f64>,
    start: Vec<usize>,
    index: Vec<usize>,
    value: Vec<f64>,
}

impl Etas {
    fn clear(&mut self) {
        self.pos.clear();
        self.pivot.clear();
        self.start.clear();
        self.index.clear();
        self.value.clear();
    }

    fn len(&self) -> usize {
        self.pos.len()
    }

    fn push(&mut self, r: usize, col: &[f64]) {
        self.start.push(self.index.len());
        self.pos.push(r);
        self.pivot.push(col[r]);
        for (k, &v) in col.iter().enumerate() {
            if k != r && v != 0.0 {
                self.index.push(k);
                self.value.push(v);
            }
        }
    }

    fn range(&self, e: usize) -> std::ops::Range<usize> {
        let end = if e + 1 < self.start.len() {
            self.start[e + 1]
        } else {
            self.index.len()
        };
        self.start[e]..end
    }

    fn ftran(&self, v: &mut [f64]) {
        for e in 0..self.len() {
            let r = self.pos[e];
            let xr = v[r] / self.pivot[e];
            v[r] = xr;
            if xr != 0.0 {
                for t in self.range(e) {
                    v[self.index[t]] -= self.value[t] * xr;
                }
            }
        }
    }

    fn btran(&self, v: &mut [f64]) {
        for e in (0..self.len()).rev() {
            let r = self.pos[e];
            let mut s = v[r];
            for t in self.range(e) {
                s -= self.value[t] * v[self.index[t]];
            }
            v[r] = s / self.pivot[e];
        }
    }
}

#[derive(Debug)]
enum Outcome {
    Optimal,
    Infeasible,
    Unbounded,
    Limit,
}

enum Step {
    Continue,
    Done(Outcome),
    Refactor,
}

pub(crate) struct Engine<'a> {
    sf: &'a Standard,
    tol: &'a Tolerances,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    artificial: Vec<bool>,
    shifted: bool,
    status: Vec<VarStatus>,
    head: Vec<usize>,
    pos_of: Vec<usize>,
    x: Vec<f64>,
    d: Vec<f64>,
    lu: LuFactors,
    etas: Etas,
    rho: Vec<f64>,
    col: Vec<f64>,
    work: Vec<f64>,
    alpha_row: Vec<f64>,
    touched: Vec<usize>,
    mark: Vec<bool>,
    iterations: usize,
    started: Instant,
    bland: bool,
    stall: usize,
    progress: usize,
}

impl<'a> Engine<'a> {
    /// `bounds` overrides the scaled bounds of structurals (used by B&B).
    pub fn new(
        sf: &'a Standard,
        tol: &'a Tolerances,
        bounds: Option<(&[f64], &[f64])>,
        warm: Option<&Basis>,
    ) -> Self {
        let n = sf.n;
        let m = sf.m;
        let (mut lower, mut upper) = (sf.lower.clone(), sf.upper.clone());
        if let Some((lo, hi)) = bounds {
            lower[..n].copy_from_slice(lo);
            upper[..n].copy_from_slice(hi);
        }
        let mut e = Engine {
            sf,
            tol,
            lower,
            upper,
            cost: sf.cost.clone(),
            artificial: vec![false; n + m],
            shifted: false,
            status: vec![VarStatus::AtLower; n + m],
            head: Vec::with_capacity(m),
            pos_of: vec![NONE; n + m],
            x: vec![0.0; n + m],
            d: vec![0.0; n + m],
            lu: LuFactors::default(),
            etas: Etas::default(),
            rho: vec![0.0; m],
            col: vec![0.0; m],
            work: vec![0.0; m],
            alpha_row: vec![0.0; n + m],
            touched: Vec::new(),
            mark: vec![false; n + m],
            iterations: 0,
            started: Instant::now(),
            bland: false,
            stall: 0,
            progress: 0,
        };
        let usable_warm = warm.filter(|b| b.status.len() == n + m);
        match usable_warm {
            Some(b) => {
                e.status.copy_from_slice(&b.status);
                let mut basic = e.status.iter().filter(|&&s| s == VarStatus::Basic).count();
                for j in (0..n).rev() {
                    if basic <= m {
                        break;
                    }
                    if e.status[j] == VarStatus::Basic {
                        e.status[j] = VarStatus::AtLower;
                        basic -= 1;
                    }
                }
                for j in n..n + m {
                    if basic >= m {
                        break;
                    }
                    if e.status[j] != VarStatus::Basic {
                        e.status[j] = VarStatus::Basic;
                        basic += 1;
                    }
                }
                for j in 0..n + m {
                    if e.status[j] == VarStatus::Basic {
                        e.pos_of[j] = e.head.len();
                        e.head.push(j);
                    } else {
                        e.status[j] = e.nonbasic_status(j, e.status[j]);
                    }
                }
            }
            None => {
                for j in 0..n {
                    let preferred = if e.cost[j] < 0.0 {
                        VarStatus::AtUpper
                    } else {
                        VarStatus::AtLower
                    };
                    e.status[j] = e.nonbasic_status(j, preferred);
                }
                for i in 0..m {
                    e.status[n + i] = VarStatus::Basic;
                    e.pos_of[n + i] = i;
                    e.head.push(n + i);
                }
            }
        }
        e
    }

    /// Picks a valid nonbasic status near `want`, boxing an infinite side
    /// artificially when the cost sign requires it.
    fn nonbasic_status(&mut self, j: usize, want: VarStatus) -> VarStatus {
        let lo = self.lower[j];
        let hi = self.upper[j];
        match want {
            VarStatus::AtLower if lo.is_finite() => VarStatus::AtLower,
            VarStatus::AtUpper if hi.is_finite() => VarStatus::AtUpper,
            _ => {
                let c = self.cost[j];
                if c > 0.0 {
                    if !lo.is_finite() {
                        self.lower[j] = -artificial_magnitude(hi);
                        self.artificial[j] = true;
                    }
                    VarStatus::AtLower
                } else if c < 0.0 {
                    if !hi.is_finite() {
                        self.upper[j] = artificial_magnitude(lo);
                        self.artificial[j] = true;
                    }
                    VarStatus::AtUpper
                } else if lo.is_finite() {
                    VarStatus::AtLower
                } else if hi.is_finite() {
                    VarStatus::AtUpper
                } else {
                    VarStatus::Free
                }
            }
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.status[j] {
            VarStatus::AtLower => self.lower[j],
            VarStatus::AtUpper => self.upper[j],
            VarStatus::Free => 0.0,
            VarStatus::Basic => self.x[j],
        }
    }

    fn timed_out(&self) -> bool {
        self.iterations >= self.tol.max_iterations
            || self
                .tol
                .time_limit
                .is_some_and(|t| self.started.elapsed() >= t)
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.sf.m;
        for attempt in 0..3 {
            let mut start = Vec::with_capacity(m + 1);
            let mut index = Vec::new();
            let mut value = Vec::new();
            start.push(0);
            for k in 0..m {
                self.sf.for_column(self.head[k], |i, a| {
                    index.push(i);
                    value.push(a);
                });
                start.push(index.len());
            }
            match LuFactors::factorize(
                m,
                &SparseCols {
                    start: &start,
                    index: &index,
                    value: &value,
                },
            ) {
                Ok(lu) => {
                    self.lu = lu;
                    self.etas.clear();
                    return Ok(());
                }
                Err(sing) => {
                    log::debug!(
                        "basis singular ({} columns), repairing (attempt {attempt})",
                        sing.cols.len()
                    );
                    for (&pos, &row) in sing.cols.iter().zip(&sing.rows) {
                        let out = self.head[pos];
                        let logical = self.sf.n + row;
                        let want = if self.x[out] >= self.upper[out] {
                            VarStatus::AtUpper
                        } else {
                            VarStatus::AtLower
                        };
                        self.status[out] = self.nonbasic_status(out, want);
                        self.pos_of[out] = NONE;
                        self.x[out] = self.nonbasic_value(out);
                        self.head[pos] = logical;
                        self.status[logical] = VarStatus::Basic;
                        self.pos_of[logical] = pos;
                    }
                }
            }
        }
        Err(LpError::Numerical("basis repair failed".into()))
    }

    fn ftran(&mut self, v: &mut Vec<f64>) {
        self.lu.ftran(v);
        self.etas.ftran(v);
    }

    fn btran(&mut self, v: &mut Vec<f64>) {
        self.etas.btran(v);
        self.lu.btran(v);
    }

    fn compute_primal(&mut self) {
        let n = self.sf.n;
        let m = self.sf.m;
        for j in 0..n + m {
            if self.status[j] != VarStatus::Basic {
                self.x[j] = self.nonbasic_value(j);
            }
        }
        let mut rhs = std::mem::take(&mut self.work);
        rhs.fill(0.0);
        for j in 0..n + m {
            if self.status[j] != VarStatus::Basic {
                let xj = self.x[j];
                if xj != 0.0 {
                    self.sf.for_column(j, |i, a| rhs[i] -= a * xj);
                }
            }
        }
        self.ftran(&mut rhs);
        for k in 0..m {
            self.x[self.head[k]] = rhs[k];
        }
        self.work = rhs;
    }

    fn compute_dual(&mut self) {
        let n = self.sf.n;
        let m = self.sf.m;
        let mut y = std::mem::take(&mut self.work);
        for k in 0..m {
            y[k] = self.cost[self.head[k]];
        }
        self.btran(&mut y);
        for j in 0..n {
            if self.status[j] == VarStatus::Basic {
                self.d[j] = 0.0;
                continue;
            }
            let mut s = self.cost[j];
            for k in self.sf.col_start[j]..self.sf.col_start[j + 1] {
                s -= self.sf.col_val[k] * y[self.sf.col_row[k]];
            }
            self.d[j] = s;
        }
        for i in 0..m {
            let j = n + i;
            self.d[j] = if self.status[j] == VarStatus::Basic {
                0.0
            } else {
                self.cost[j] + y[i]
            };
        }
        self.work = y;
    }

    fn row_duals(&mut self) -> Vec<f64> {
        let m = self.sf.m;
        let mut y = vec![0.0; m];
        for k in 0..m {
            y[k] = self.sf.cost[self.head[k]];
        }
        self.btran(&mut y);
        y
    }

    /// Flips boxed columns or shifts costs until every nonbasic reduced cost
    /// has the right sign. Returns whether any primal value moved.
    fn restore_dual_feasibility(&mut self) -> bool {
        let tol = self.tol.dual;
        let mut moved = false;
        for j in 0..self.sf.n + self.sf.m {
            let dj = self.d[j];
            let bad = match self.status[j] {
                VarStatus::AtLower => dj < -tol,
                VarStatus::AtUpper => dj > tol,
                VarStatus::Free => dj.abs() > tol,
                VarStatus::Basic => false,
            };
            if !bad {
                continue;
            }
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if self.status[j] == VarStatus::AtLower && dj < 0.0 && !hi.is_finite() {
                self.upper[j] = artificial_magnitude(lo);
                self.artificial[j] = true;
            } else if self.status[j] == VarStatus::AtUpper && dj > 0.0 && !lo.is_finite() {
                self.lower[j] = -artificial_magnitude(hi);
                self.artificial[j] = true;
            }
            let boxed = self.lower[j].is_finite() && self.upper[j].is_finite();
            if boxed && self.lower[j] < self.upper[j] {
                self.status[j] = if dj < 0.0 {
                    VarStatus::AtUpper
                } else {
                    VarStatus::AtLower
                };
                moved = true;
            } else {
                self.cost[j] -= dj;
                self.d[j] = 0.0;
                self.shifted = true;
            }
        }
        moved
    }

    fn reinvert(&mut self) -> Result<(), LpError> {
        self.refactor()?;
        self.compute_dual();
        self.restore_dual_feasibility();
        self.compute_primal();
        Ok(())
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lower[j] {
            self.lower[j] - v
        } else if v > self.upper[j] {
            v - self.upper[j]
        } else {
            0.0
        }
    }

    fn choose_leaving(&self) -> Option<usize> {
        let tol = self.tol.primal;
        let mut best = None;
        let mut best_val = 0.0;
        let mut best_var = NONE;
        for (r, &j) in self.head.iter().enumerate() {
            let inf = self.infeasibility(j);
            if inf <= tol {
                continue;
            }
            if self.bland {
                if j < best_var {
                    best_var = j;
                    best = Some(r);
                }
            } else {
                if inf > best_val {
                    best_val = inf;
                    best = Some(r);
                }
            }
        }
        best
    }

    /// `alpha_row[j] = rho^T a_j` for nonbasic `j`, listed in `touched`.
    fn compute_pivot_row(&mut self) {
        for &j in &self.touched {
            self.alpha_row[j] = 0.0;
            self.mark[j] = false;
        }
        self.touched.clear();
        let n = self.sf.n;
        for i in 0..self.sf.m {
            let ri = self.rho[i];
            if ri.abs() < 1e-13 {
                continue;
            }
            for k in self.sf.row_start[i]..self.sf.row_start[i + 1] {
                let j = self.sf.row_col[k];
                if self.status[j] == VarStatus::Basic {
                    continue;
                }
                if !self.mark[j] {
                    self.mark[j] = true;
                    self.touched.push(j);
                }
                self.alpha_row[j] += ri * self.sf.row_val[k];
            }
            let j = n + i;
            if self.status[j] != VarStatus::Basic {
                if !self.mark[j] {
                    self.mark[j] = true;
                    self.touched.push(j);
                }
                self.alpha_row[j] -= ri;
            }
        }
    }

    fn load_column(&mut self, q: usize) {
        let mut col = std::mem::take(&mut self.col);
        col.fill(0.0);
        self.sf.for_column(q, |i, a| col[i] = a);
        self.ftran(&mut col);
        self.col = col;
    }

    fn pivot_basis(&mut self, r: usize, q: usize, leaving_status: VarStatus) {
        let p = self.head[r];
        self.etas.push(r, &self.col);
        self.head[r] = q;
        self.pos_of[q] = r;
        self.status[q] = VarStatus::Basic;
        self.pos_of[p] = NONE;
        self.status[p] = leaving_status;
        self.d[q] = 0.0;
    }

    fn note_progress(&mut self, step: f64) {
        if step.abs() > 1e-12 {
            self.progress += 1;
            self.stall = 0;
            if self.bland && self.progress >= BLAND_RELEASE {
                self.bland = false;
            }
        } else {
            self.stall += 1;
            self.progress = 0;
            if self.stall >= STALL_LIMIT {
                self.bland = true;
            }
        }
    }

    fn dual_iteration(&mut self) -> Step {
        let Some(r) = self.choose_leaving() else {
            return Step::Done(Outcome::Optimal);
        };
        let p = self.head[r];
        let to_upper = self.x[p] > self.upper[p];
        let bound = if to_upper {
            self.upper[p]
        } else {
            self.lower[p]
        };
        let delta = self.x[p] - bound;
        let sign = if to_upper { 1.0 } else { -1.0 };

        self.rho.fill(0.0);
        self.rho[r] = 1.0;
        let mut rho = std::mem::take(&mut self.rho);
        self.btran(&mut rho);
        self.rho = rho;
        self.compute_pivot_row();

        let ptol = self.tol.pivot;
        let mut cands: Vec<(usize, f64, f64)> = Vec::new();
        for &j in &self.touched {
            if self.lower[j] == self.upper[j] {
                continue;
            }
            let a = sign * self.alpha_row[j];
            let ok = match self.status[j] {
                VarStatus::AtLower => a > ptol,
                VarStatus::AtUpper => a < -ptol,
                VarStatus::Free => a.abs() > ptol,
                VarStatus::Basic => false,
            };
            if ok {
                let t = match self.status[j] {
                    VarStatus::Free => 0.0,
                    _ => (self.d[j] / a).max(0.0),
                };
                cands.push((j, a, t));
            }
        }
        if cands.is_empty() {
            return Step::Done(Outcome::Infeasible);
        }
        cands.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));

        let mut slope = delta.abs();
        let mut k = 0;
        while k < cands.len() {
            let (j, a, _) = cands[k];
            let range = self.upper[j] - self.lower[j];
            if self.status[j] != VarStatus::Free && range.is_finite() {
                let next = slope - a.abs() * range;
                if next > self.tol.primal {
                    slope = next;
                    k += 1;
                    continue;
                }
            }
            break;
        }
        if k == cands.len() {
            return Step::Done(Outcome::Infeasible);
        }

        let rest = &cands[k..];
        let q = if self.bland {
            let t0 = rest[0].2;
            rest.iter()
                .filter(|c| c.2 <= t0 + 1e-12)
                .map(|c| c.0)
                .min()
                .unwrap()
        } else {
            let tol = self.tol.dual;
            let tmax = rest
                .iter()
                .map(|&(j, a, _)| (self.d[j].abs() + tol) / a.abs())
                .fold(f64::INFINITY, f64::min);
            let mut best = rest[0];
            for &c in rest.iter().filter(|c| c.2 <= tmax) {
                if c.1.abs() > best.1.abs() {
                    best = c;
                }
            }
            best.0
        };
        let flips: Vec<usize> = cands[..k].iter().map(|c| c.0).collect();

        let alpha_rq = self.alpha_row[q];
        self.load_column(q);
        let check = self.col[r];
        if (check - alpha_rq).abs() > 1e-7 * (1.0 + alpha_rq.abs()) {
            if self.etas.len() > 0 {
                return Step::Refactor;
            }
            log::debug!("pivot mismatch after fresh factorisation: {check} vs {alpha_rq}");
        }
        let alpha_rq = check;
        if alpha_rq.abs() < 1e-11 {
            return Step::Refactor;
        }

        let theta_d = self.d[q] / alpha_rq;
        for &j in &self.touched {
            self.d[j] -= theta_d * self.alpha_row[j];
        }
        self.d[p] = -theta_d;

        if !flips.is_empty() {
            let mut w = std::mem::take(&mut self.work);
            w.fill(0.0);
            for &j in &flips {
                let (from, to, st) = match self.status[j] {
                    VarStatus::AtLower => (self.lower[j], self.upper[j], VarStatus::AtUpper),
                    _ => (self.upper[j], self.lower[j], VarStatus::AtLower),
                };
                let step = to - from;
                self.status[j] = st;
                self.x[j] = to;
                self.sf.for_column(j, |i, a| w[i] += a * step);
            }
            self.ftran(&mut w);
            for k in 0..self.sf.m {
                self.x[self.head[k]] -= w[k];
            }
            self.work = w;
        }

        let theta_p = (self.x[p] - bound) / alpha_rq;
        for k in 0..self.sf.m {
            let c = self.col[k];
            if c != 0.0 {
                self.x[self.head[k]] -= theta_p * c;
            }
        }
        self.x[q] += theta_p;
        self.x[p] = bound;
        self.note_progress(theta_d * delta);
        let leaving = if to_upper {
            VarStatus::AtUpper
        } else {
            VarStatus::AtLower
        };
        self.pivot_basis(r, q, leaving);
        Step::Continue
    }

    fn primal_iteration(&mut self) -> Step {
        let tol = self.tol.dual;
        let mut q = NONE;
        let mut best = tol;
        for j in 0..self.sf.n + self.sf.m {
            if self.lower[j] == self.upper[j] {
                continue;
            }
            let dj = self.d[j];
            let infeas = match self.status[j] {
                VarStatus::AtLower => -dj,
                VarStatus::AtUpper => dj,
                VarStatus::Free => dj.abs(),
                VarStatus::Basic => 0.0,
            };
            if infeas > tol {
                if self.bland {
                    if q == NONE {
                        q = j;
                    }
                } else if infeas > best {
                    best = infeas;
                    q = j;
                }
            }
        }
        if q == NONE {
            return Step::Done(Outcome::Optimal);
        }
        let dir = if self.d[q] < 0.0 { 1.0 } else { -1.0 };
        self.load_column(q);

        let ptol = self.tol.pivot;
        let ftol = self.tol.primal;
        let mut tmax = f64::INFINITY;
        for k in 0..self.sf.m {
            let a = dir * self.col[k];
            if a.abs() <= ptol {
                continue;
            }
            let j = self.head[k];
            let lim = if a > 0.0 {
                (self.x[j] - self.lower[j] + ftol) / a
            } else {
                (self.upper[j] - self.x[j] + ftol) / -a
            };
            tmax = tmax.min(lim);
        }
        let range = self.upper[q] - self.lower[q];
        if !tmax.is_finite() && !range.is_finite() {
            return Step::Done(Outcome::Unbounded);
        }
        let mut r = NONE;
        let mut r_alpha = 0.0;
        let mut r_step = 0.0;
        for k in 0..self.sf.m {
            let a = dir * self.col[k];
            if a.abs() <= ptol {
                continue;
            }
            let j = self.head[k];
            let t = if a > 0.0 {
                (self.x[j] - self.lower[j]) / a
            } else {
                (self.upper[j] - self.x[j]) / -a
            };
            if t.is_finite() && t <= tmax && a.abs() > r_alpha {
                r = k;
                r_alpha = a.abs();
                r_step = t.max(0.0);
            }
        }
        if r == NONE || (range.is_finite() && range <= r_step) {
            // Bound flip of the entering column.
            let step = dir * range;
            for k in 0..self.sf.m {
                let c = self.col[k];
                if c != 0.0 {
                    self.x[self.head[k]] -= step * c;
                }
            }
            self.status[q] = if dir > 0.0 {
                VarStatus::AtUpper
            } else {
                VarStatus::AtLower
            };
            self.x[q] = self.nonbasic_value(q);
            self.note_progress(step);
            return Step::Continue;
        }
        let p = self.head[r];
        let step = dir * r_step;
        for k in 0..self.sf.m {
            let c = self.col[k];
            if c != 0.0 {
                self.x[self.head[k]] -= step * c;
            }
        }
        self.x[q] += step;
        let leaving = if dir * self.col[r] > 0.0 {
            VarStatus::AtLower
        } else {
            VarStatus::AtUpper
        };
        self.x[p] = if leaving == VarStatus::AtLower {
            self.lower[p]
        } else {
            self.upper[p]
        };

        self.rho.fill(0.0);
        self.rho[r] = 1.0;
        let mut rho = std::mem::take(&mut self.rho);
        self.btran(&mut rho);
        self.rho = rho;
        self.compute_pivot_row();
        let alpha_rq = self.col[r];
        let theta_d = self.d[q] / alpha_rq;
        for &j in &self.touched {
            self.d[j] -= theta_d * self.alpha_row[j];
        }
        self.d[p] = -theta_d;
        self.note_progress(step * self.d[q]);
        self.pivot_basis(r, q, leaving);
        Step::Continue
    }

    fn run_loop(&mut self, primal: bool) -> Result<Outcome, LpError> {
        let mut fresh = true;
        loop {
            if self.timed_out() {
                return Ok(Outcome::Limit);
            }
            if self.etas.len() >= REFACTOR_EVERY
                || self.etas.index.len() > 2 * self.lu.nonzeros() + self.sf.m
            {
                self.reinvert()?;
                fresh = true;
            }
            let step = if primal {
                self.primal_iteration()
            } else {
                self.dual_iteration()
            };
            match step {
                Step::Continue => {
                    self.iterations += 1;
                    fresh = false;
                }
                Step::Refactor => {
                    self.reinvert()?;
                    fresh = true;
                }
                Step::Done(out) => {
                    if fresh {
                        return Ok(out);
                    }
                    // Confirm termination on freshly computed values.
                    self.reinvert()?;
                    fresh = true;
                }
            }
        }
    }

    pub fn solve(mut self) -> Result<EngineResult, LpError> {
        let n = self.sf.n;
        let m = self.sf.m;
        if m > 0 {
            self.refactor()?;
        }
        self.compute_dual();
        self.restore_dual_feasibility();
        if m > 0 {
            self.compute_primal();
        } else {
            for j in 0..n {
                self.x[j] = self.nonbasic_value(j);
            }
        }

        let mut outcome = if m > 0 {
            self.run_loop(false)?
        } else {
            Outcome::Optimal
        };

        let dual_iters = self.iterations;
        let was_shifted = self.shifted;
        if matches!(outcome, Outcome::Optimal) && self.shifted {
            self.cost.copy_from_slice(&self.sf.cost);
            self.shifted = false;
            self.compute_dual();
            self.bland = false;
            self.stall = 0;
            outcome = self.run_loop(true)?;
            if matches!(outcome, Outcome::Optimal) && self.choose_leaving().is_some() {
                // Primal drift during cleanup; finish with the dual again.
                self.restore_dual_feasibility();
                self.compute_primal();
                outcome = self.run_loop(false)?;
            }
        }

        if matches!(outcome, Outcome::Optimal) {
            for j in 0..n + m {
                if self.artificial[j] && self.status[j] != VarStatus::Basic {
                    let at_art = match self.status[j] {
                        VarStatus::AtLower => self.sf.lower[j] != self.lower[j],
                        VarStatus::AtUpper => self.sf.upper[j] != self.upper[j],
                        _ => false,
                    };
                    if at_art && self.d[j].abs() > self.tol.dual {
                        outcome = Outcome::Unbounded;
                        break;
                    }
                }
            }
        }

        log::debug!(
            "simplex {}x{}: {:?} after {} dual + {} cleanup iterations (shifted {}) in {:.3}s",
            m,
            n,
            outcome,
            dual_iters,
            self.iterations - dual_iters,
            was_shifted,
            self.started.elapsed().as_secs_f64()
        );
        Ok(self.finish(outcome))
    }

    fn finish(mut self, outcome: Outcome) -> EngineResult {
        let n = self.sf.n;
        let m = self.sf.m;
        let status = match outcome {
            Outcome::Optimal => SolveStatus::Optimal,
            Outcome::Infeasible => SolveStatus::Infeasible,
            Outcome::Unbounded => SolveStatus::Unbounded,
            Outcome::Limit => SolveStatus::IterationLimit,
        };
        let sc = &self.sf.scaling;
        let primal: Vec<f64> = (0..n).map(|j| self.x[j] * sc.col[j]).collect();
        let mut max_res: f64 = 0.0;
        for i in 0..m {
            let mut act = 0.0;
            for k in self.sf.row_start[i]..self.sf.row_start[i + 1] {
                act += self.sf.row_val[k] * self.x[self.sf.row_col[k]];
            }
            let lo = self.sf.lower[n + i];
            let hi = self.sf.upper[n + i];
            max_res = max_res.max(lo - act).max(act - hi);
        }
        let (duals, reduced) = if m > 0 && matches!(status, SolveStatus::Optimal) {
            let y = self.row_duals();
            let duals: Vec<f64> = (0..m)
                .map(|i| y[i] * sc.row[i] / self.sf.cost_scale)
                .collect();
            let mut dj = vec![0.0; n];
            for j in 0..n {
                let mut s = self.sf.cost[j];
                for k in self.sf.col_start[j]..self.sf.col_start[j + 1] {
                    s -= self.sf.col_val[k] * y[self.sf.col_row[k]];
                }
                dj[j] = s / (self.sf.cost_scale * sc.col[j]);
            }
            (duals, dj)
        } else {
            (vec![0.0; m], vec![0.0; n])
        };
        let objective = self.sf.offset
            + (0..n)
                .map(|j| self.sf.cost[j] * self.x[j])
                .sum::<f64>()
                / self.sf.cost_scale;
        EngineResult {
            status,
            objective,
            primal,
            duals,
            reduced_costs: reduced,
            iterations: self.iterations,
            basis: Basis {
                status: std::mem::take(&mut self.status),
            },
            max_scaled_residual: max_res.max(0.0),
        }
    }
}
