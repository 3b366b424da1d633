//! Shared data model: fleet, frequency-security parameters, system case and
//! schedule results.
//!
//! Units: MW, MWh, MVA·s, Hz, £. Reports convert inertia to GVA·s.

use serde::{Deserialize, Serialize};

/// A Table-1 style row of identical thermal units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalUnit {
    pub name: String,
    pub count: u32,
    /// Rated output per unit, MW.
    pub p_max: f64,
    /// Minimum stable generation per unit, MW.
    pub p_msg: f64,
    /// MW/h per unit.
    pub ramp_rate: f64,
    /// £/h per committed unit.
    pub cost_noload: f64,
    /// £/MWh.
    pub cost_marginal: f64,
    /// £ per start.
    pub cost_startup: f64,
    /// Hours from start-up decision to generation.
    pub t_startup: u32,
    pub t_min_up: u32,
    pub t_min_down: u32,
    /// Inertia constant H_g, s.
    pub inertia_const: f64,
    /// MW per unit.
    pub pfr_max: f64,
    #[serde(default)]
    pub must_run: bool,
}

impl ThermalUnit {
    pub fn capacity(&self) -> f64 {
        self.p_max * self.count as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageUnit {
    pub name: String,
    pub p_charge_max: f64,
    pub p_discharge_max: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
    pub efr_max: f64,
    pub e_initial: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReliabilityStandard {
    #[serde(rename = "N1_fixed")]
    N1Fixed,
    #[serde(rename = "N2_fixed")]
    N2Fixed,
    #[serde(rename = "N1_optimized")]
    N1Optimized,
}

impl ReliabilityStandard {
    pub const ALL: [ReliabilityStandard; 3] = [
        ReliabilityStandard::N1Fixed,
        ReliabilityStandard::N2Fixed,
        ReliabilityStandard::N1Optimized,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ReliabilityStandard::N1Fixed => "N1_fixed",
            ReliabilityStandard::N2Fixed => "N2_fixed",
            ReliabilityStandard::N1Optimized => "N1_optimized",
        }
    }
}

impl std::str::FromStr for ReliabilityStandard {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "N1_fixed" | "n1" | "N1" => Ok(ReliabilityStandard::N1Fixed),
            "N2_fixed" | "n2" | "N2" => Ok(ReliabilityStandard::N2Fixed),
            "N1_optimized" | "n1opt" | "optimized" => Ok(ReliabilityStandard::N1Optimized),
            other => Err(format!("unknown reliability standard '{other}'")),
        }
    }
}

impl std::fmt::Display for ReliabilityStandard {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreqSecurityParams {
    /// Nominal frequency, Hz.
    pub f0: f64,
    /// Hz/s.
    pub rocof_max: f64,
    /// Admissible deviation at the nadir, Hz.
    pub delta_f_max: f64,
    /// Full-delivery time of EFR, s.
    pub t_efr: f64,
    /// Full-delivery time of PFR, s.
    pub t_pfr: f64,
    /// Inertia constant of the outaged unit, s.
    pub h_loss: f64,
    pub standard: ReliabilityStandard,
    /// Contingency size for the fixed standards, MW.
    pub p_loss_fixed: f64,
}

impl Default for FreqSecurityParams {
    fn default() -> Self {
        Self {
            f0: 50.0,
            rocof_max: 1.0,
            delta_f_max: 0.8,
            t_efr: 1.0,
            t_pfr: 10.0,
            h_loss: 5.0,
            standard: ReliabilityStandard::N1Fixed,
            p_loss_fixed: 1800.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemCase {
    pub name: String,
    pub thermal: Vec<ThermalUnit>,
    pub storage: Vec<StorageUnit>,
    /// Hourly demand, MW.
    pub demand: Vec<f64>,
    /// Hourly aggregate wind + solar forecast, MW.
    pub res_forecast: Vec<f64>,
    /// £/MWh.
    pub voll: f64,
    pub freq: FreqSecurityParams,
    /// System EFR volume cap, MW.
    pub efr_procured_cap: f64,
    pub secured: bool,
}

impl SystemCase {
    /// Index of the unit with the largest rating (first on ties).
    pub fn largest_unit(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, u) in self.thermal.iter().enumerate() {
            if u.count == 0 {
                continue;
            }
            if best.is_none_or(|b| u.p_max > self.thermal[b].p_max) {
                best = Some(i);
            }
        }
        best
    }

    /// Rating of the largest single unit, MW.
    pub fn largest_rating(&self) -> f64 {
        self.largest_unit().map_or(0.0, |i| self.thermal[i].p_max)
    }

    pub fn horizon_len(&self) -> usize {
        self.demand.len()
    }
}

/// One failed invariant: the offending field path and the rule it breaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

struct Checker(Vec<Violation>);

impl Checker {
    fn check(&mut self, ok: bool, field: impl Into<String>, rule: &str) {
        if !ok {
            self.0.push(Violation {
                field: field.into(),
                rule: rule.to_string(),
            });
        }
    }
}

fn finite_nonneg(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

/// Lists every broken invariant; an empty list means the case is valid.
pub fn validate_case(case: &SystemCase) -> Vec<Violation> {
    let mut c = Checker(Vec::new());
    for (i, u) in case.thermal.iter().enumerate() {
        let f = |name: &str| format!("thermal[{i}].{name}");
        c.check(
            finite_nonneg(u.p_msg) && u.p_msg <= u.p_max,
            f("p_msg"),
            "must satisfy 0 <= p_msg <= p_max",
        );
        c.check(finite_nonneg(u.p_max), f("p_max"), "must be finite and >= 0");
        c.check(u.ramp_rate > 0.0 && u.ramp_rate.is_finite(), f("ramp_rate"), "must be > 0");
        c.check(finite_nonneg(u.cost_noload), f("cost_noload"), "must be >= 0");
        c.check(finite_nonneg(u.cost_marginal), f("cost_marginal"), "must be >= 0");
        c.check(finite_nonneg(u.cost_startup), f("cost_startup"), "must be >= 0");
        c.check(finite_nonneg(u.inertia_const), f("inertia_const"), "must be >= 0");
        c.check(finite_nonneg(u.pfr_max), f("pfr_max"), "must be >= 0");
    }
    for (i, s) in case.storage.iter().enumerate() {
        let f = |name: &str| format!("storage[{i}].{name}");
        c.check(
            finite_nonneg(s.e_min) && s.e_min <= s.e_initial && s.e_initial <= s.e_max,
            f("e_initial"),
            "must satisfy e_min <= e_initial <= e_max",
        );
        c.check(
            s.eta_charge > 0.0 && s.eta_charge <= 1.0,
            f("eta_charge"),
            "must be in (0, 1]",
        );
        c.check(
            s.eta_discharge > 0.0 && s.eta_discharge <= 1.0,
            f("eta_discharge"),
            "must be in (0, 1]",
        );
        c.check(finite_nonneg(s.p_charge_max), f("p_charge_max"), "must be >= 0");
        c.check(finite_nonneg(s.p_discharge_max), f("p_discharge_max"), "must be >= 0");
        c.check(
            finite_nonneg(s.efr_max) && s.efr_max <= s.p_discharge_max + s.p_charge_max,
            f("efr_max"),
            "must satisfy 0 <= efr_max <= p_discharge_max + p_charge_max",
        );
    }
    let p = &case.freq;
    c.check(p.f0 > 0.0 && p.f0.is_finite(), "freq.f0", "must be > 0");
    c.check(p.rocof_max > 0.0 && p.rocof_max.is_finite(), "freq.rocof_max", "must be > 0");
    c.check(
        p.delta_f_max > 0.0 && p.delta_f_max < p.f0,
        "freq.delta_f_max",
        "must satisfy 0 < delta_f_max < f0",
    );
    c.check(
        p.t_efr > 0.0 && p.t_efr < p.t_pfr && p.t_pfr.is_finite(),
        "freq.t_efr",
        "must satisfy 0 < t_efr < t_pfr",
    );
    c.check(finite_nonneg(p.h_loss), "freq.h_loss", "must be >= 0");
    c.check(finite_nonneg(p.p_loss_fixed), "freq.p_loss_fixed", "must be >= 0");
    c.check(
        case.demand.len() == case.res_forecast.len(),
        "res_forecast",
        "must have the same length as demand",
    );
    if let Some(t) = case.demand.iter().position(|&d| !finite_nonneg(d)) {
        c.check(false, format!("demand[{t}]"), "must be finite and >= 0");
    }
    if let Some(t) = case.res_forecast.iter().position(|&d| !finite_nonneg(d)) {
        c.check(false, format!("res_forecast[{t}]"), "must be finite and >= 0");
    }
    c.check(case.voll > 0.0 && case.voll.is_finite(), "voll", "must be > 0");
    c.check(finite_nonneg(case.efr_procured_cap), "efr_procured_cap", "must be >= 0");
    c.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ThermalDispatch {
    /// Committed units (fractional under relaxation).
    pub committed: f64,
    pub output: f64,
    pub pfr: f64,
    pub startup: f64,
    pub shutdown: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StorageDispatch {
    pub charge: f64,
    pub discharge: f64,
    /// State of charge at the end of the step, MWh.
    pub energy: f64,
    pub efr: f64,
    /// Discharge-mode indicator y_s.
    pub mode: f64,
}

/// Schedule of one tree node (or one realized hour of a rolling run).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node: usize,
    pub parent: Option<usize>,
    pub t: usize,
    pub probability: f64,
    pub demand: f64,
    pub res: f64,
    pub thermal: Vec<ThermalDispatch>,
    pub storage: Vec<StorageDispatch>,
    pub curtailment: f64,
    pub shed: f64,
    /// Post-loss system inertia, MVA·s.
    pub inertia: f64,
    pub p_loss: f64,
    pub efr: f64,
    pub pfr: f64,
    /// Part of the contingency left unsecured by the infeasibility fallback.
    pub uncovered_loss: f64,
}

impl NodeRecord {
    /// Supply minus demand; zero for a balanced record.
    pub fn balance_residual(&self) -> f64 {
        let thermal: f64 = self.thermal.iter().map(|d| d.output).sum();
        let storage: f64 = self.storage.iter().map(|s| s.discharge - s.charge).sum();
        thermal + storage + self.res - self.curtailment - (self.demand - self.shed)
    }

    /// Committed synchronous capacity, MW.
    pub fn committed_capacity(&self, fleet: &[ThermalUnit]) -> f64 {
        self.thermal
            .iter()
            .zip(fleet)
            .map(|(d, u)| d.committed * u.p_max)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub no_load: f64,
    pub marginal: f64,
    pub startup: f64,
    /// Unserved energy at VoLL plus any uncovered contingency at its penalty.
    pub shed_penalty: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.no_load + self.marginal + self.startup + self.shed_penalty
    }

    pub fn add(&mut self, other: &CostBreakdown) {
        self.no_load += other.no_load;
        self.marginal += other.marginal;
        self.startup += other.startup;
        self.shed_penalty += other.shed_penalty;
    }

    pub fn scaled(&self, k: f64) -> CostBreakdown {
        CostBreakdown {
            no_load: self.no_load * k,
            marginal: self.marginal * k,
            startup: self.startup * k,
            shed_penalty: self.shed_penalty * k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleResult {
    pub case_name: String,
    pub thermal_names: Vec<String>,
    pub storage_names: Vec<String>,
    pub records: Vec<NodeRecord>,
    /// Expected (or realized, for rolling runs) total cost, £.
    pub total_cost: f64,
    pub costs: CostBreakdown,
    /// Steps solved with the contingency only partly secured.
    pub insecure_steps: Vec<usize>,
}

impl ScheduleResult {
    pub fn max_balance_residual(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.balance_residual().abs() / r.demand.max(1.0))
            .fold(0.0, f64::max)
    }
}
