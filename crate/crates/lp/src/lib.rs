//! Linear and mixed-binary programming for the unit-commitment engine.
//!
//! [`LinearProgram`] is the modelling form. [`solve_lp`] runs a bounded dual
//! simplex on it and [`solve_mip`] adds best-first branch-and-bound over the
//! integer columns. [`LpBackend`] is the seam for plugging in another solver.

use std::time::Duration;

use thiserror::Error;

mod bnb;
mod lu;
pub mod model;
pub mod mps;
mod scaling;
mod simplex;

pub use model::{Constraint, LinearProgram, Relation, RowId, VarId, Variable};
pub use simplex::{Basis, VarStatus};

#[derive(Debug, Error)]
pub enum LpError {
    #[error("variable {var} has invalid bounds [{lower}, {upper}]")]
    InvalidBounds { var: String, lower: f64, upper: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("row {row} references unknown variable index {index}")]
    UnknownVariable { row: String, index: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("MPS parse error at line {line}: {msg}")]
    Mps { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration, node or time budget exhausted; the outcome carries the best
    /// incumbent found, if any.
    IterationLimit,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::IterationLimit => "iteration-limit",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Tolerances {
    /// Bound violation accepted on scaled rows and columns.
    pub primal: f64,
    /// Reduced-cost sign tolerance on scaled costs.
    pub dual: f64,
    /// Smallest pivot element considered in ratio tests.
    pub pivot: f64,
    pub integrality: f64,
    /// Relative optimality gap at which branch-and-bound stops.
    pub mip_gap: f64,
    pub max_iterations: usize,
    pub max_nodes: usize,
    pub time_limit: Option<Duration>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            primal: 1e-9,
            dual: 1e-9,
            pivot: 1e-9,
            integrality: 1e-6,
            mip_gap: 1e-6,
            max_iterations: 5_000_000,
            max_nodes: 200_000,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Objective in model units including the constant offset.
    pub objective: f64,
    pub primal: Vec<f64>,
    /// Row duals of the final LP (for MIPs: the LP at the incumbent's node).
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
    pub nodes: usize,
    pub wall_time: Duration,
    /// Lower bound proven by branch-and-bound (equals `objective` for LPs).
    pub best_bound: f64,
    /// Largest row-bound violation in the scaled computational form.
    pub max_scaled_residual: f64,
    pub basis: Option<Basis>,
}

impl SolveOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.primal[v.0]
    }

    /// Objective of the dual LP `b^T y + sum of bound terms`, recomputed
    /// from the duals and reduced costs of this outcome.
    pub fn dual_objective(&self, lp: &LinearProgram) -> f64 {
        let mut obj = lp.objective_offset();
        for (row, &y) in lp.rows().iter().zip(&self.duals) {
            obj += row.rhs * y;
        }
        for (j, (var, &d)) in lp.vars().iter().zip(&self.reduced_costs).enumerate() {
            let bound = if d > 0.0 {
                var.lower
            } else if d < 0.0 {
                var.upper
            } else {
                self.primal[j]
            };
            if bound.is_finite() {
                obj += d * bound;
            }
        }
        obj
    }
}

/// Solves the continuous relaxation: integrality flags are ignored.
pub fn solve_lp(lp: &LinearProgram, tol: &Tolerances) -> Result<SolveOutcome, LpError> {
    bnb::solve_relaxation(lp, tol, None)
}

/// [`solve_mip`] starting from a basis of this or a closely related LP. The
/// basis is padded or trimmed to the right number of basic columns, and a
/// singular one is repaired, so any status vector of the right length works.
pub fn solve_from_basis(
    lp: &LinearProgram,
    tol: &Tolerances,
    warm: Option<&Basis>,
) -> Result<SolveOutcome, LpError> {
    bnb::solve_mip(lp, tol, warm)
}

/// Solves with branch-and-bound over integer columns. Without integer columns
/// this is exactly [`solve_lp`].
pub fn solve_mip(lp: &LinearProgram, tol: &Tolerances) -> Result<SolveOutcome, LpError> {
    bnb::solve_mip(lp, tol, None)
}

/// Minimal solver interface used by the scheduling model.
pub trait LpBackend {
    fn name(&self) -> &str;
    fn solve(&mut self, lp: &LinearProgram) -> Result<SolveOutcome, LpError>;

    /// Solve with a starting basis hint; backends without warm starts ignore it.
    fn solve_warm(
        &mut self,
        lp: &LinearProgram,
        warm: Option<&Basis>,
    ) -> Result<SolveOutcome, LpError> {
        let _ = warm;
        self.solve(lp)
    }
}

/// The built-in simplex and branch-and-bound.
///
/// When `reuse_basis` is set, the final basis of a solve seeds the next one if
/// the problem dimensions match; rolling-horizon models re-solve the same
/// structure with shifted data, so this skips most of phase two.
#[derive(Debug, Clone, Default)]
pub struct BundledSolver {
    pub tolerances: Tolerances,
    pub reuse_basis: bool,
    last: Option<(usize, usize, Basis)>,
}

impl BundledSolver {
    pub fn new(tolerances: Tolerances) -> Self {
        Self {
            tolerances,
            reuse_basis: false,
            last: None,
        }
    }

    pub fn with_basis_reuse(mut self, on: bool) -> Self {
        self.reuse_basis = on;
        self
    }
}

impl LpBackend for BundledSolver {
    fn name(&self) -> &str {
        "bundled-simplex"
    }

    fn solve(&mut self, lp: &LinearProgram) -> Result<SolveOutcome, LpError> {
        let warm = match (&self.last, self.reuse_basis) {
            (Some((n, m, b)), true) if *n == lp.num_vars() && *m == lp.num_rows() => Some(b),
            _ => None,
        };
        let out = bnb::solve_mip(lp, &self.tolerances, warm)?;
        if self.reuse_basis {
            if let (Some(b), SolveStatus::Optimal) = (&out.basis, out.status) {
                self.last = Some((lp.num_vars(), lp.num_rows(), b.clone()));
            }
        }
        Ok(out)
    }

    fn solve_warm(
        &mut self,
        lp: &LinearProgram,
        warm: Option<&Basis>,
    ) -> Result<SolveOutcome, LpError> {
        bnb::solve_mip(lp, &self.tolerances, warm)
    }
}

/// Writes `name value` lines for every column.
pub fn write_solution<W: std::io::Write>(
    lp: &LinearProgram,
    out: &SolveOutcome,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "# status {}", out.status)?;
    writeln!(w, "# objective {}", out.objective)?;
    for (v, x) in lp.vars().iter().zip(&out.primal) {
        writeln!(w, "{} {}", v.name, x)?;
    }
    Ok(())
}
