//! Frequency-secured stochastic unit commitment as a linear program.
//!
//! Identical units of one type are modelled as a single aggregate block when
//! binaries are relaxed (commitment in `[0, count]`), and as `count`
//! independent clones otherwise. Both views give the same relaxed optimum.

use freqsuc_lp::model::{LinearProgram, Relation, VarId};
use freqsuc_lp::{SolveOutcome, SolveStatus};
use thiserror::Error;

use crate::coretypes::{
    validate_case, CostBreakdown, NodeRecord, ReliabilityStandard, ScheduleResult,
    StorageDispatch, SystemCase, ThermalDispatch, Violation,
};
use crate::freqsec::NadirCutSet;
use crate::scenario::ScenarioTree;

/// Price of uncovered contingency as a multiple of VoLL. Above one, so that
/// shedding load to free response headroom is preferred to going insecure.
pub const UNCOVERED_PENALTY: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum UcError {
    #[error("case is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidCase(Vec<Violation>),
    #[error("series '{series}' has {got} values, {expected} needed")]
    Dimension {
        series: String,
        expected: usize,
        got: usize,
    },
    #[error("node {0} has a negative probability")]
    NegativeProbability(usize),
    #[error("optimised loss needs a must-run largest unit with count 1")]
    NoMustRunLargestUnit,
    #[error("horizon must be at least one step")]
    EmptyHorizon,
    #[error("solution does not match the model: {0}")]
    Solution(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PLossMode {
    Fixed,
    Optimized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UcOptions {
    pub relax_binaries: bool,
    pub horizon_steps: usize,
    pub include_frequency_constraints: bool,
    pub p_loss_mode: PLossMode,
    /// Step length, h.
    pub dt: f64,
    /// Adds a VoLL-priced slack on the secured contingency size, so that a
    /// step with no securable commitment still solves.
    pub allow_uncovered_loss: bool,
    /// Inertia added to the RoCoF row and every nadir cut, MVA·s.
    pub security_margin: f64,
}

impl Default for UcOptions {
    fn default() -> Self {
        Self {
            relax_binaries: true,
            horizon_steps: 24,
            include_frequency_constraints: true,
            p_loss_mode: PLossMode::Fixed,
            dt: 1.0,
            allow_uncovered_loss: false,
            security_margin: 1.0,
        }
    }
}

impl UcOptions {
    /// Options matching a case's `secured` flag and reliability standard.
    pub fn for_case(case: &SystemCase, horizon_steps: usize) -> Self {
        Self {
            horizon_steps,
            include_frequency_constraints: case.secured,
            p_loss_mode: match case.freq.standard {
                ReliabilityStandard::N1Optimized => PLossMode::Optimized,
                _ => PLossMode::Fixed,
            },
            ..Self::default()
        }
    }
}

/// State of one unit type before the first step, summed over its clones.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitHistory {
    pub committed: f64,
    pub output: f64,
    /// Start-up decisions of past steps, most recent first.
    pub starts: Vec<f64>,
    /// Shut-down decisions of past steps, most recent first.
    pub shutdowns: Vec<f64>,
}

impl UnitHistory {
    fn start(&self, steps_back: usize) -> f64 {
        self.starts.get(steps_back - 1).copied().unwrap_or(0.0)
    }

    fn shutdown(&self, steps_back: usize) -> f64 {
        self.shutdowns.get(steps_back - 1).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub thermal: Vec<UnitHistory>,
    /// Stored energy per storage unit, MWh.
    pub storage_energy: Vec<f64>,
}

impl InitialState {
    /// Must-run units on at full output, units whose ramp rate cannot reach
    /// minimum stable generation in one step on at msg, all others off.
    /// Storage at `e_initial`.
    pub fn cold(case: &SystemCase) -> Self {
        let thermal = case
            .thermal
            .iter()
            .map(|u| {
                let n = u.count as f64;
                let (committed, output) = if u.must_run {
                    (n, n * u.p_max)
                } else if u.ramp_rate < u.p_msg {
                    (n, n * u.p_msg)
                } else {
                    (0.0, 0.0)
                };
                UnitHistory {
                    committed,
                    output,
                    starts: Vec::new(),
                    shutdowns: Vec::new(),
                }
            })
            .collect();
        Self {
            thermal,
            storage_energy: case.storage.iter().map(|s| s.e_initial).collect(),
        }
    }

    /// State after implementing `root`.
    pub fn advance(&self, case: &SystemCase, root: &NodeRecord) -> Self {
        let thermal = self
            .thermal
            .iter()
            .zip(&case.thermal)
            .zip(&root.thermal)
            .map(|((h, u), d)| {
                let keep = |v: &Vec<f64>, x: f64, len: usize| {
                    let mut out = Vec::with_capacity(len);
                    out.push(x);
                    out.extend(v.iter().copied().take(len.saturating_sub(1)));
                    out.truncate(len);
                    out
                };
                let start_len = (u.t_startup + u.t_min_up) as usize;
                UnitHistory {
                    committed: d.committed,
                    output: d.output,
                    starts: keep(&h.starts, d.startup, start_len),
                    shutdowns: keep(&h.shutdowns, d.shutdown, u.t_min_down as usize),
                }
            })
            .collect();
        Self {
            thermal,
            storage_energy: root.storage.iter().map(|s| s.energy).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Commitment,
    Output,
    Pfr,
    Startup,
    Shutdown,
    Charge,
    Discharge,
    Energy,
    Efr,
    StorageMode,
    Curtailment,
    Shed,
    Inertia,
    SystemPfr,
    SystemEfr,
    UncoveredLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarMeta {
    pub node: usize,
    pub t: usize,
    /// Thermal or storage unit index, when the variable belongs to one.
    pub unit: Option<usize>,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    unit: usize,
    mult: f64,
}

#[derive(Debug, Clone, Copy)]
enum Commit {
    Fixed(f64),
    Var(VarId),
}

#[derive(Debug, Clone)]
struct ThermalVars {
    y: Commit,
    p: VarId,
    pfr: Option<VarId>,
    st: Option<VarId>,
    sd: Option<VarId>,
}

#[derive(Debug, Clone)]
struct StorageVars {
    pc: VarId,
    pd: VarId,
    e: VarId,
    mode: VarId,
    efr: Option<VarId>,
}

#[derive(Debug, Clone)]
struct FreqVars {
    h: VarId,
    pfr: VarId,
    efr: VarId,
    uncovered: Option<VarId>,
}

#[derive(Debug, Clone)]
struct NodeVars {
    thermal: Vec<ThermalVars>,
    storage: Vec<StorageVars>,
    curt: VarId,
    shed: VarId,
    freq: Option<FreqVars>,
}

/// An assembled model plus the bookkeeping needed to read solutions back.
#[derive(Debug, Clone)]
pub struct UcModel {
    pub lp: LinearProgram,
    pub meta: Vec<VarMeta>,
    pub options: UcOptions,
    blocks: Vec<Block>,
    nodes: Vec<NodeVars>,
    demand: Vec<f64>,
    p_loss_max: f64,
    largest_block: Option<usize>,
}

struct Builder<'a> {
    case: &'a SystemCase,
    tree: &'a ScenarioTree,
    opt: &'a UcOptions,
    init: &'a InitialState,
    demand: Vec<f64>,
    blocks: Vec<Block>,
    lp: LinearProgram,
    meta: Vec<VarMeta>,
    nodes: Vec<NodeVars>,
    p_loss_max: f64,
    largest_block: Option<usize>,
}

impl<'a> Builder<'a> {
    fn var(&mut self, name: String, lo: f64, hi: f64, meta: VarMeta, integer: bool) -> VarId {
        let v = self.lp.add_var(name, lo, hi, 0.0);
        if integer {
            self.lp.set_integer(v, true);
        }
        self.meta.push(meta);
        v
    }

    fn freq_on(&self) -> bool {
        self.opt.include_frequency_constraints
    }

    fn declare_variables(&mut self) {
        let integer = !self.opt.relax_binaries;
        for n in 0..self.tree.len() {
            let node = &self.tree.nodes[n];
            let t = node.stage;
            let m = |unit: Option<usize>, kind| VarMeta {
                node: n,
                t,
                unit,
                kind,
            };
            let mut thermal = Vec::with_capacity(self.blocks.len());
            for b in 0..self.blocks.len() {
                let Block { unit, mult } = self.blocks[b];
                let u = &self.case.thermal[unit];
                let tag = format!("g{unit}b{b}n{n}");
                let y = if u.must_run {
                    Commit::Fixed(mult)
                } else {
                    Commit::Var(self.var(
                        format!("y_{tag}"),
                        0.0,
                        mult,
                        m(Some(unit), VarKind::Commitment),
                        integer,
                    ))
                };
                let p = self.var(
                    format!("p_{tag}"),
                    0.0,
                    mult * u.p_max,
                    m(Some(unit), VarKind::Output),
                    false,
                );
                let pfr = (self.freq_on() && u.pfr_max > 0.0).then(|| {
                    self.var(
                        format!("pfr_{tag}"),
                        0.0,
                        mult * u.pfr_max,
                        m(Some(unit), VarKind::Pfr),
                        false,
                    )
                });
                let (st, sd) = if u.must_run {
                    (None, None)
                } else {
                    let st = self.var(
                        format!("yst_{tag}"),
                        0.0,
                        mult,
                        m(Some(unit), VarKind::Startup),
                        integer,
                    );
                    let sd = self.var(
                        format!("ysd_{tag}"),
                        0.0,
                        mult,
                        m(Some(unit), VarKind::Shutdown),
                        integer,
                    );
                    (Some(st), Some(sd))
                };
                thermal.push(ThermalVars { y, p, pfr, st, sd });
            }
            let mut storage = Vec::with_capacity(self.case.storage.len());
            for (i, s) in self.case.storage.iter().enumerate() {
                let tag = format!("s{i}n{n}");
                let pc = self.var(
                    format!("pc_{tag}"),
                    0.0,
                    s.p_charge_max,
                    m(Some(i), VarKind::Charge),
                    false,
                );
                let pd = self.var(
                    format!("pd_{tag}"),
                    0.0,
                    s.p_discharge_max,
                    m(Some(i), VarKind::Discharge),
                    false,
                );
                let e = self.var(
                    format!("e_{tag}"),
                    s.e_min,
                    s.e_max,
                    m(Some(i), VarKind::Energy),
                    false,
                );
                let mode = self.var(
                    format!("ys_{tag}"),
                    0.0,
                    1.0,
                    m(Some(i), VarKind::StorageMode),
                    integer,
                );
                let efr = (self.freq_on() && s.efr_max > 0.0).then(|| {
                    self.var(
                        format!("efr_{tag}"),
                        0.0,
                        s.efr_max,
                        m(Some(i), VarKind::Efr),
                        false,
                    )
                });
                storage.push(StorageVars {
                    pc,
                    pd,
                    e,
                    mode,
                    efr,
                });
            }
            let res = node.res;
            let d = self.demand[t];
            let curt = self.var(format!("curt_n{n}"), 0.0, res, m(None, VarKind::Curtailment), false);
            let shed = self.var(format!("shed_n{n}"), 0.0, d, m(None, VarKind::Shed), false);
            let freq = self.freq_on().then(|| {
                let inf = f64::INFINITY;
                let h = self.var(format!("h_n{n}"), -inf, inf, m(None, VarKind::Inertia), false);
                let pfr = self.var(format!("pfr_n{n}"), 0.0, inf, m(None, VarKind::SystemPfr), false);
                let efr = self.var(
                    format!("efr_n{n}"),
                    0.0,
                    self.case.efr_procured_cap,
                    m(None, VarKind::SystemEfr),
                    false,
                );
                let uncovered = self.opt.allow_uncovered_loss.then(|| {
                    self.var(
                        format!("unc_n{n}"),
                        0.0,
                        self.p_loss_max,
                        m(None, VarKind::UncoveredLoss),
                        false,
                    )
                });
                FreqVars {
                    h,
                    pfr,
                    efr,
                    uncovered,
                }
            });
            self.nodes.push(NodeVars {
                thermal,
                storage,
                curt,
                shed,
                freq,
            });
        }
    }

    fn build_objective(&mut self) -> Result<(), UcError> {
        let dt = self.opt.dt;
        let mut offset = 0.0;
        for n in 0..self.tree.len() {
            let pi = self.tree.nodes[n].probability;
            if pi < 0.0 || !pi.is_finite() {
                return Err(UcError::NegativeProbability(n));
            }
            for (b, tv) in self.nodes[n].thermal.iter().enumerate() {
                let u = &self.case.thermal[self.blocks[b].unit];
                match tv.y {
                    Commit::Fixed(k) => offset += pi * u.cost_noload * dt * k,
                    Commit::Var(y) => self.lp.var_mut(y).cost = pi * u.cost_noload * dt,
                }
                self.lp.var_mut(tv.p).cost = pi * u.cost_marginal * dt;
                if let Some(st) = tv.st {
                    self.lp.var_mut(st).cost = pi * u.cost_startup;
                }
            }
            let shed = self.nodes[n].shed;
            self.lp.var_mut(shed).cost = pi * self.case.voll * dt;
            if let Some(unc) = self.nodes[n].freq.as_ref().and_then(|f| f.uncovered) {
                self.lp.var_mut(unc).cost = pi * UNCOVERED_PENALTY * self.case.voll * dt;
            }
        }
        self.lp.set_objective_offset(offset);
        Ok(())
    }

    fn add_load_balance(&mut self) {
        for n in 0..self.tree.len() {
            let node = &self.tree.nodes[n];
            let nv = &self.nodes[n];
            let mut terms: Vec<(VarId, f64)> = nv.thermal.iter().map(|tv| (tv.p, 1.0)).collect();
            for sv in &nv.storage {
                terms.push((sv.pd, 1.0));
                terms.push((sv.pc, -1.0));
            }
            terms.push((nv.curt, -1.0));
            terms.push((nv.shed, 1.0));
            let rhs = self.demand[node.stage] - node.res;
            self.lp.add_row(format!("bal_n{n}"), terms, Relation::Eq, rhs);
        }
    }

    /// Commitment of block `b` one stage above node `n` (constant at the root).
    fn parent_commit(&self, n: usize, b: usize) -> Commit {
        match self.tree.nodes[n].parent {
            Some(p) => self.nodes[p].thermal[b].y,
            None => Commit::Fixed(self.block_history(b).committed),
        }
    }

    fn block_history(&self, b: usize) -> UnitHistory {
        let Block { unit, mult } = self.blocks[b];
        let h = &self.init.thermal[unit];
        let share = mult / self.case.thermal[unit].count as f64;
        UnitHistory {
            committed: h.committed * share,
            output: h.output * share,
            starts: h.starts.iter().map(|x| x * share).collect(),
            shutdowns: h.shutdowns.iter().map(|x| x * share).collect(),
        }
    }

    /// Start-up decision `k` stages above `n`: a variable inside the tree or a
    /// historical constant.
    fn startup_back(&self, n: usize, b: usize, k: usize, hist: &UnitHistory) -> Commit {
        let stage = self.tree.nodes[n].stage;
        if k <= stage {
            let a = self.tree.ancestor(n, k).expect("ancestor within tree");
            Commit::Var(self.nodes[a].thermal[b].st.expect("flexible unit"))
        } else {
            Commit::Fixed(hist.start(k - stage))
        }
    }

    fn shutdown_back(&self, n: usize, b: usize, k: usize, hist: &UnitHistory) -> Commit {
        let stage = self.tree.nodes[n].stage;
        if k <= stage {
            let a = self.tree.ancestor(n, k).expect("ancestor within tree");
            Commit::Var(self.nodes[a].thermal[b].sd.expect("flexible unit"))
        } else {
            Commit::Fixed(hist.shutdown(k - stage))
        }
    }

    fn add_thermal_constraints(&mut self) {
        let hist: Vec<UnitHistory> = (0..self.blocks.len()).map(|b| self.block_history(b)).collect();
        for n in 0..self.tree.len() {
            let parent = self.tree.nodes[n].parent;
            for b in 0..self.blocks.len() {
                let Block { unit, mult } = self.blocks[b];
                let u = self.case.thermal[unit].clone();
                let tv = self.nodes[n].thermal[b].clone();
                let tag = format!("g{unit}b{b}n{n}");
                let h = &hist[b];
                // Power limits; as bounds for must-run units.
                match tv.y {
                    Commit::Fixed(k) => {
                        self.lp.set_bounds(tv.p, k * u.p_msg, k * u.p_max);
                    }
                    Commit::Var(y) => {
                        self.lp.add_row(
                            format!("pmin_{tag}"),
                            [(tv.p, 1.0), (y, -u.p_msg)],
                            Relation::Ge,
                            0.0,
                        );
                        self.lp.add_row(
                            format!("pmax_{tag}"),
                            [(tv.p, 1.0), (y, -u.p_max)],
                            Relation::Le,
                            0.0,
                        );
                    }
                }
                // Ramp limits.
                let mut up = vec![(tv.p, 1.0)];
                let mut down = vec![(tv.p, 1.0)];
                let mut up_rhs = 0.0;
                let mut down_rhs = 0.0;
                match parent {
                    Some(p) => {
                        let pp = self.nodes[p].thermal[b].p;
                        up.push((pp, -1.0));
                        down.push((pp, -1.0));
                    }
                    None => {
                        up_rhs += h.output;
                        down_rhs += h.output;
                    }
                }
                match tv.y {
                    Commit::Fixed(k) => up_rhs += u.ramp_rate * k,
                    Commit::Var(y) => up.push((y, -u.ramp_rate)),
                }
                match self.parent_commit(n, b) {
                    Commit::Fixed(k) => down_rhs -= u.ramp_rate * k,
                    Commit::Var(yp) => down.push((yp, u.ramp_rate)),
                }
                self.lp.add_row(format!("rup_{tag}"), up, Relation::Le, up_rhs);
                self.lp.add_row(format!("rdn_{tag}"), down, Relation::Ge, down_rhs);
                // Headroom for PFR.
                if let Some(pfr) = tv.pfr {
                    let mut terms = vec![(pfr, 1.0), (tv.p, 1.0)];
                    let mut rhs = 0.0;
                    match tv.y {
                        Commit::Fixed(k) => rhs = k * u.p_max,
                        Commit::Var(y) => terms.push((y, -u.p_max)),
                    }
                    self.lp.add_row(format!("hr_{tag}"), terms, Relation::Le, rhs);
                }
                let (Commit::Var(y), Some(st), Some(sd)) = (tv.y, tv.st, tv.sd) else {
                    continue;
                };
                let yp = self.parent_commit(n, b);
                let tst = u.t_startup as usize;
                // State recursion with the start-up lag substituted in.
                let mut terms = vec![(y, 1.0), (sd, 1.0)];
                let mut rhs = 0.0;
                match yp {
                    Commit::Fixed(k) => rhs += k,
                    Commit::Var(v) => terms.push((v, -1.0)),
                }
                match self.startup_back(n, b, tst, h) {
                    Commit::Fixed(k) => rhs += k,
                    Commit::Var(v) => terms.push((v, -1.0)),
                }
                self.lp.add_row(format!("rec_{tag}"), terms, Relation::Eq, rhs);
                // Start-up only when off, and off for the minimum down time.
                let mut terms = vec![(st, 1.0)];
                let mut rhs = mult;
                match yp {
                    Commit::Fixed(k) => rhs -= k,
                    Commit::Var(v) => terms.push((v, 1.0)),
                }
                for k in 1..=u.t_min_down as usize {
                    match self.shutdown_back(n, b, k, h) {
                        Commit::Fixed(x) => rhs -= x,
                        Commit::Var(v) => terms.push((v, 1.0)),
                    }
                }
                self.lp.add_row(format!("stw_{tag}"), terms, Relation::Le, rhs);
                // Shut-down only when on, and on for the minimum up time.
                let mut terms = vec![(sd, 1.0)];
                let mut rhs = 0.0;
                match yp {
                    Commit::Fixed(k) => rhs += k,
                    Commit::Var(v) => terms.push((v, -1.0)),
                }
                for k in 1..=u.t_min_up as usize {
                    match self.startup_back(n, b, k + tst, h) {
                        Commit::Fixed(x) => rhs -= x,
                        Commit::Var(v) => terms.push((v, 1.0)),
                    }
                }
                self.lp.add_row(format!("sdw_{tag}"), terms, Relation::Le, rhs);
            }
        }
    }

    fn add_storage_constraints(&mut self) {
        let dt = self.opt.dt;
        for n in 0..self.tree.len() {
            let parent = self.tree.nodes[n].parent;
            for (i, s) in self.case.storage.iter().enumerate() {
                let sv = self.nodes[n].storage[i].clone();
                let tag = format!("s{i}n{n}");
                let mut terms = vec![
                    (sv.e, 1.0),
                    (sv.pc, -s.eta_charge * dt),
                    (sv.pd, dt / s.eta_discharge),
                ];
                let mut rhs = 0.0;
                match parent {
                    Some(p) => terms.push((self.nodes[p].storage[i].e, -1.0)),
                    None => rhs = self.init.storage_energy[i],
                }
                self.lp.add_row(format!("soc_{tag}"), terms, Relation::Eq, rhs);
                self.lp.add_row(
                    format!("chg_{tag}"),
                    [(sv.pc, 1.0), (sv.mode, s.p_charge_max)],
                    Relation::Le,
                    s.p_charge_max,
                );
                self.lp.add_row(
                    format!("dis_{tag}"),
                    [(sv.pd, 1.0), (sv.mode, -s.p_discharge_max)],
                    Relation::Le,
                    0.0,
                );
                if let Some(efr) = sv.efr {
                    self.lp.add_row(
                        format!("efrh_{tag}"),
                        [
                            (efr, 1.0),
                            (sv.mode, -s.p_discharge_max),
                            (sv.pd, 1.0),
                            (sv.pc, -1.0),
                        ],
                        Relation::Le,
                        0.0,
                    );
                }
            }
        }
    }

    fn add_frequency_constraints(&mut self, cuts: &NadirCutSet) {
        let fp = &self.case.freq;
        let rocof_coef = fp.f0 / (2.0 * fp.rocof_max);
        let margin = self.opt.security_margin;
        let mut h_const = -fp.h_loss * self.p_loss_max;
        let mut h_terms_template = Vec::new();
        for (b, blk) in self.blocks.iter().enumerate() {
            let u = &self.case.thermal[blk.unit];
            let coef = u.inertia_const * u.p_max;
            if u.must_run {
                h_const += coef * blk.mult;
            } else {
                h_terms_template.push((b, coef));
            }
        }
        for n in 0..self.tree.len() {
            let nv = self.nodes[n].clone();
            let Some(fv) = nv.freq.clone() else { continue };
            // System inertia, PFR and EFR aggregates.
            let mut terms = vec![(fv.h, 1.0)];
            for &(b, coef) in &h_terms_template {
                if let Commit::Var(y) = nv.thermal[b].y {
                    terms.push((y, -coef));
                }
            }
            self.lp.add_row(format!("hdef_n{n}"), terms, Relation::Eq, h_const);
            let mut terms = vec![(fv.pfr, 1.0)];
            terms.extend(nv.thermal.iter().filter_map(|tv| tv.pfr).map(|v| (v, -1.0)));
            self.lp.add_row(format!("pfrdef_n{n}"), terms, Relation::Eq, 0.0);
            let mut terms = vec![(fv.efr, 1.0)];
            terms.extend(nv.storage.iter().filter_map(|sv| sv.efr).map(|v| (v, -1.0)));
            self.lp.add_row(format!("efrdef_n{n}"), terms, Relation::Eq, 0.0);

            // Secured loss L = P_Loss - U as (terms, constant).
            let mut loss_terms: Vec<(VarId, f64)> = Vec::new();
            let mut loss_const = 0.0;
            match (self.opt.p_loss_mode, self.largest_block) {
                (PLossMode::Optimized, Some(b)) => loss_terms.push((nv.thermal[b].p, 1.0)),
                _ => loss_const = self.p_loss_max,
            }
            if let Some(u) = fv.uncovered {
                loss_terms.push((u, -1.0));
            }
            let with_loss = |base: Vec<(VarId, f64)>, a_loss: f64, rhs: f64| {
                let mut t = base;
                t.extend(loss_terms.iter().map(|&(v, c)| (v, c * a_loss)));
                (t, rhs - a_loss * loss_const)
            };

            let (t, rhs) = with_loss(vec![(fv.h, 1.0)], -rocof_coef, margin);
            self.lp.add_row(format!("rocof_n{n}"), t, Relation::Ge, rhs);
            let (t, rhs) = with_loss(vec![(fv.efr, 1.0), (fv.pfr, 1.0)], -1.0, 0.0);
            self.lp.add_row(format!("qss_n{n}"), t, Relation::Ge, rhs);
            if cuts.ratio_max < 1.0 {
                let (t, rhs) =
                    with_loss(vec![(fv.efr, -1.0), (fv.pfr, -cuts.ratio_max)], 1.0, 0.0);
                self.lp.add_row(format!("ratio_n{n}"), t, Relation::Le, rhs);
            }
            for (k, c) in cuts.cuts.iter().enumerate() {
                let (t, rhs) = with_loss(
                    vec![(fv.h, c.a_h), (fv.efr, c.a_efr), (fv.pfr, c.a_pfr)],
                    c.a_loss,
                    c.b + margin * c.a_h,
                );
                self.lp.add_row(format!("nadir{k}_n{n}"), t, Relation::Ge, rhs);
            }
        }
    }
}

fn check_series(name: &str, len: usize, needed: usize) -> Result<(), UcError> {
    if len < needed {
        return Err(UcError::Dimension {
            series: name.into(),
            expected: needed,
            got: len,
        });
    }
    Ok(())
}

/// Builds the scheduling LP for `tree`, whose stage 0 is step `start` of the
/// case series, starting from `initial`.
pub fn assemble(
    case: &SystemCase,
    tree: &ScenarioTree,
    options: &UcOptions,
    cuts: &NadirCutSet,
    initial: &InitialState,
    start: usize,
) -> Result<UcModel, UcError> {
    let violations = validate_case(case);
    if !violations.is_empty() {
        return Err(UcError::InvalidCase(violations));
    }
    if options.horizon_steps == 0 || tree.is_empty() {
        return Err(UcError::EmptyHorizon);
    }
    check_series("tree stages", tree.num_stages(), options.horizon_steps)?;
    check_series("demand", case.demand.len(), start + tree.num_stages())?;
    check_series("initial thermal state", initial.thermal.len(), case.thermal.len())?;
    check_series("initial storage state", initial.storage_energy.len(), case.storage.len())?;

    let mut blocks = Vec::new();
    for (i, u) in case.thermal.iter().enumerate() {
        if u.count == 0 {
            continue;
        }
        if options.relax_binaries {
            blocks.push(Block {
                unit: i,
                mult: u.count as f64,
            });
        } else {
            for _ in 0..u.count {
                blocks.push(Block { unit: i, mult: 1.0 });
            }
        }
    }
    let (p_loss_max, largest_block) = match options.p_loss_mode {
        PLossMode::Fixed => (case.freq.p_loss_fixed, None),
        PLossMode::Optimized => {
            let li = case.largest_unit().ok_or(UcError::NoMustRunLargestUnit)?;
            let lu = &case.thermal[li];
            if !lu.must_run || lu.count != 1 {
                return Err(UcError::NoMustRunLargestUnit);
            }
            let b = blocks.iter().position(|b| b.unit == li).expect("block exists");
            (lu.p_max, Some(b))
        }
    };
    let demand = case.demand[start..start + tree.num_stages()].to_vec();
    let mut bld = Builder {
        case,
        tree,
        opt: options,
        init: initial,
        demand,
        blocks,
        lp: LinearProgram::new(format!("{}_t{start}", case.name)),
        meta: Vec::new(),
        nodes: Vec::with_capacity(tree.len()),
        p_loss_max,
        largest_block,
    };
    bld.declare_variables();
    bld.build_objective()?;
    bld.add_load_balance();
    bld.add_thermal_constraints();
    bld.add_storage_constraints();
    if options.include_frequency_constraints {
        bld.add_frequency_constraints(cuts);
    }
    log::debug!(
        "assembled {}: {} rows, {} columns, {} nonzeros",
        bld.lp.name,
        bld.lp.num_rows(),
        bld.lp.num_vars(),
        bld.lp.num_nonzeros()
    );
    Ok(UcModel {
        lp: bld.lp,
        meta: bld.meta,
        options: options.clone(),
        blocks: bld.blocks,
        nodes: bld.nodes,
        demand: bld.demand,
        p_loss_max,
        largest_block,
    })
}

impl UcModel {
    /// Reads a primal solution back into per-node records and expected costs.
    pub fn extract(
        &self,
        case: &SystemCase,
        tree: &ScenarioTree,
        x: &[f64],
    ) -> Result<ScheduleResult, UcError> {
        if x.len() != self.lp.num_vars() {
            return Err(UcError::Solution(format!(
                "{} values for {} variables",
                x.len(),
                self.lp.num_vars()
            )));
        }
        let dt = self.options.dt;
        let val = |c: Commit| match c {
            Commit::Fixed(k) => k,
            Commit::Var(v) => x[v.0],
        };
        let opt = |v: Option<VarId>| v.map_or(0.0, |v| x[v.0]);
        let mut records = Vec::with_capacity(tree.len());
        let mut costs = CostBreakdown::default();
        for (n, nv) in self.nodes.iter().enumerate() {
            let node = &tree.nodes[n];
            let pi = node.probability;
            let mut thermal = vec![ThermalDispatch::default(); case.thermal.len()];
            let mut inertia = -case.freq.h_loss * self.p_loss_max;
            for (b, tv) in nv.thermal.iter().enumerate() {
                let blk = self.blocks[b];
                let u = &case.thermal[blk.unit];
                let d = &mut thermal[blk.unit];
                let y = val(tv.y);
                let p = x[tv.p.0];
                let st = opt(tv.st);
                d.committed += y;
                d.output += p;
                d.pfr += opt(tv.pfr);
                d.startup += st;
                d.shutdown += opt(tv.sd);
                inertia += u.inertia_const * u.p_max * y;
            }
            let storage: Vec<StorageDispatch> = nv
                .storage
                .iter()
                .map(|sv| StorageDispatch {
                    charge: x[sv.pc.0],
                    discharge: x[sv.pd.0],
                    energy: x[sv.e.0],
                    efr: opt(sv.efr),
                    mode: x[sv.mode.0],
                })
                .collect();
            let shed = x[nv.shed.0];
            let uncovered = nv.freq.as_ref().map_or(0.0, |f| opt(f.uncovered));
            let p_loss = match self.largest_block {
                Some(b) => x[nv.thermal[b].p.0],
                None => self.p_loss_max,
            };
            let rec = NodeRecord {
                node: n,
                parent: node.parent,
                t: node.stage,
                probability: pi,
                demand: self.demand[node.stage],
                res: node.res,
                thermal,
                storage: storage.clone(),
                curtailment: x[nv.curt.0],
                shed,
                inertia,
                p_loss,
                efr: storage.iter().map(|s| s.efr).sum(),
                pfr: nv.thermal.iter().map(|tv| opt(tv.pfr)).sum(),
                uncovered_loss: uncovered,
            };
            costs.add(&record_cost(case, &rec, dt).scaled(pi));
            records.push(rec);
        }
        Ok(ScheduleResult {
            case_name: case.name.clone(),
            thermal_names: case.thermal.iter().map(|u| u.name.clone()).collect(),
            storage_names: case.storage.iter().map(|s| s.name.clone()).collect(),
            records,
            total_cost: costs.total(),
            costs,
            insecure_steps: Vec::new(),
        })
    }

    /// Extracts an optimal outcome; other statuses are reported as errors.
    pub fn extract_outcome(
        &self,
        case: &SystemCase,
        tree: &ScenarioTree,
        out: &SolveOutcome,
    ) -> Result<ScheduleResult, UcError> {
        if out.status != SolveStatus::Optimal {
            return Err(UcError::Solution(format!("solver status {}", out.status)));
        }
        self.extract(case, tree, &out.primal)
    }

    /// Rating of the contingency whose inertia is lost, MW.
    pub fn p_loss_max(&self) -> f64 {
        self.p_loss_max
    }

    /// Variable with the given metadata, if any (first match).
    pub fn find(&self, node: usize, unit: Option<usize>, kind: VarKind) -> Option<VarId> {
        self.meta
            .iter()
            .position(|m| m.node == node && m.unit == unit && m.kind == kind)
            .map(VarId)
    }
}

/// Cost of one record as if it occurred with certainty.
pub fn record_cost(case: &SystemCase, rec: &NodeRecord, dt: f64) -> CostBreakdown {
    let mut c = CostBreakdown::default();
    for (u, d) in case.thermal.iter().zip(&rec.thermal) {
        c.no_load += u.cost_noload * dt * d.committed;
        c.marginal += u.cost_marginal * dt * d.output;
        c.startup += u.cost_startup * d.startup;
    }
    c.shed_penalty = case.voll * dt * (rec.shed + UNCOVERED_PENALTY * rec.uncovered_loss);
    c
}

/// Largest simultaneous charge and discharge of any storage unit, MW.
pub fn storage_overlap(result: &ScheduleResult) -> f64 {
    result
        .records
        .iter()
        .flat_map(|r| r.storage.iter())
        .map(|s| s.charge.min(s.discharge))
        .fold(0.0, f64::max)
}
