//! Experiment runner: ancillary-cost decomposition, inertia distribution,
//! weekly operation, EFR sensitivity and reliability-standard comparison.
//!
//! Every experiment is a set of rolling runs ("arms") over the same periods
//! of the case's profiles. Arms are cached by key, so experiments sharing an
//! arm (the unsecured run, or EFR 1500 MW under N-1) solve it once.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coretypes::{CostBreakdown, NodeRecord, ReliabilityStandard, ScheduleResult, SystemCase};
use crate::freqsec::{
    default_nadir_cuts, min_inertia_for_rocof, nadir_satisfied, rocof_satisfied, FrequencyState,
};
use crate::ingest::{write_table_file, CaseBundle, IngestError};
use crate::scenario::{rolling_run, RollingError, RollingOptions, RollingOutcome, TracePath};
use crate::ucmodel::UcOptions;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("arm {arm}, period {period}: {source}")]
    Run {
        arm: String,
        period: String,
        #[source]
        source: RollingError,
    },
    #[error("{0} needs at least one sweep value")]
    EmptySweep(&'static str),
    #[error("period '{period}' needs steps {first}..{end} of the profiles, which cover {available}")]
    PeriodOutOfRange {
        period: String,
        first: isize,
        end: usize,
        available: usize,
    },
    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("writing {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    CostSplit,
    InertiaHist,
    WeekProfile,
    EfrSweep,
    ReliabilityCompare,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::CostSplit,
        ExperimentKind::InertiaHist,
        ExperimentKind::WeekProfile,
        ExperimentKind::EfrSweep,
        ExperimentKind::ReliabilityCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::CostSplit => "cost_split",
            ExperimentKind::InertiaHist => "inertia_hist",
            ExperimentKind::WeekProfile => "week_profile",
            ExperimentKind::EfrSweep => "efr_sweep",
            ExperimentKind::ReliabilityCompare => "reliability_compare",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ExperimentError::UnknownExperiment(s.to_string()))
    }
}

/// A stretch of reported steps. `start` is the first reported step; warm-up
/// steps are taken from before it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub name: String,
    pub start: usize,
    pub steps: usize,
}

/// Start days of the representative weeks (mid-January, April, July, October).
pub const REPRESENTATIVE_DAYS: [(&str, usize); 4] =
    [("winter", 14), ("spring", 105), ("summer", 196), ("autumn", 287)];

/// Default reported length of a representative period, h.
pub const WEEK: usize = 168;

pub fn representative_weeks(steps: usize) -> Vec<Period> {
    REPRESENTATIVE_DAYS
        .iter()
        .map(|&(name, day)| Period {
            name: name.to_string(),
            start: day * 24,
            steps,
        })
        .collect()
}

/// The whole profile as one period, less the warm-up and the last lookahead.
pub fn full_year(case: &SystemCase, warmup: usize, lookahead: usize) -> Period {
    let len = case.demand.len().min(case.res_forecast.len());
    Period {
        name: "year".to_string(),
        start: warmup,
        steps: (len + 1).saturating_sub(warmup + lookahead),
    }
}

/// The day-aligned window of `steps` hours with the most hours where RES
/// forecast covers demand; ties go to the larger RES surplus, then the earlier
/// start.
pub fn high_res_week(case: &SystemCase, steps: usize, warmup: usize, lookahead: usize) -> Period {
    let len = case.demand.len().min(case.res_forecast.len());
    let mut best: Option<(usize, f64, usize)> = None;
    let mut start = warmup.div_ceil(24) * 24;
    while start + steps + lookahead <= len + 1 {
        let mut covered = 0;
        let mut surplus = 0.0;
        for h in start..start + steps {
            if case.res_forecast[h] >= case.demand[h] {
                covered += 1;
            }
            surplus += case.res_forecast[h] - case.demand[h];
        }
        let better = match best {
            None => true,
            Some((c, s, _)) => covered > c || (covered == c && surplus > s),
        };
        if better {
            best = Some((covered, surplus, start));
        }
        start += 24;
    }
    Period {
        name: "high_res".to_string(),
        start: best.map_or(warmup, |b| b.2),
        steps,
    }
}

/// Settings shared by every arm of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub periods: Vec<Period>,
    pub warmup: usize,
    pub lookahead: usize,
    /// Replaces the case's tree branching stages when set.
    pub branching_stages: Option<Vec<usize>>,
    /// Seed of a sampled realized RES path; the median path when `None`.
    pub seed: Option<u64>,
    /// Replaces the case's RoCoF limit when set, Hz/s.
    pub rocof: Option<f64>,
    /// Contingency secured under the N-2 standard, MW.
    pub n2_loss: f64,
    /// Runs the distribution and weekly experiments without frequency
    /// constraints.
    pub unsecured: bool,
    pub time_limit: Option<Duration>,
}

/// Branching used by default in experiment runs.
pub const DESK_BRANCHING: [usize; 1] = [1];

impl RunSettings {
    /// Four representative weeks, 24 h warm-up and lookahead, and a tree
    /// branching at the first stage only.
    pub fn desk_scale() -> Self {
        Self {
            periods: representative_weeks(WEEK),
            warmup: 24,
            lookahead: 24,
            branching_stages: Some(DESK_BRANCHING.to_vec()),
            seed: None,
            rocof: None,
            n2_loss: 2800.0,
            unsecured: false,
            time_limit: None,
        }
    }
}

/// What distinguishes one arm from another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmConfig {
    pub secured: bool,
    pub efr_cap: f64,
    pub standard: ReliabilityStandard,
}

impl ArmConfig {
    pub fn unsecured() -> Self {
        Self {
            secured: false,
            efr_cap: 0.0,
            standard: ReliabilityStandard::N1Fixed,
        }
    }

    pub fn secured(efr_cap: f64, standard: ReliabilityStandard) -> Self {
        Self {
            secured: true,
            efr_cap,
            standard,
        }
    }

    /// EFR cap and standard do not matter without frequency constraints, so
    /// every unsecured config shares one key.
    pub fn key(&self) -> String {
        if self.secured {
            format!("{}_efr{}", self.standard.label(), self.efr_cap)
        } else {
            "unsecured".to_string()
        }
    }
}

/// One arm: the same configuration rolled over every period.
#[derive(Debug, Clone)]
pub struct ArmRun {
    pub key: String,
    pub config: ArmConfig,
    /// The case as modified for this arm.
    pub case: SystemCase,
    pub runs: Vec<(Period, RollingOutcome)>,
}

impl ArmRun {
    pub fn total_cost(&self) -> f64 {
        self.runs.iter().map(|(_, o)| o.result.total_cost).sum()
    }

    pub fn costs(&self) -> CostBreakdown {
        let mut c = CostBreakdown::default();
        for (_, o) in &self.runs {
            c.add(&o.result.costs);
        }
        c
    }

    pub fn records(&self) -> impl Iterator<Item = &NodeRecord> {
        self.runs.iter().flat_map(|(_, o)| o.result.records.iter())
    }

    pub fn hours(&self) -> usize {
        self.runs.iter().map(|(_, o)| o.result.records.len()).sum()
    }

    pub fn insecure_hours(&self) -> usize {
        self.runs.iter().map(|(_, o)| o.insecure.len()).sum()
    }

    pub fn shed_mwh(&self) -> f64 {
        self.records().map(|r| r.shed).sum()
    }

    /// Hours whose realized state fails the RoCoF or nadir check. Always zero
    /// for unsecured arms, which are not checked.
    pub fn security_violations(&self) -> usize {
        if !self.config.secured {
            return 0;
        }
        self.records()
            .filter(|r| !record_secure(r, &self.case))
            .count()
    }

    pub fn solve_time(&self) -> Duration {
        self.runs.iter().map(|(_, o)| o.solve_time).sum()
    }

    fn schedules(&self) -> Vec<(String, ScheduleResult)> {
        self.runs
            .iter()
            .map(|(p, o)| (format!("{}_{}", self.key, p.name), o.result.clone()))
            .collect()
    }
}

/// RoCoF and nadir checks on a realized record.
pub fn record_secure(rec: &NodeRecord, case: &SystemCase) -> bool {
    let s = FrequencyState {
        h: rec.inertia,
        efr: rec.efr,
        pfr: rec.pfr,
        p_loss: rec.p_loss,
    };
    rocof_satisfied(&s, &case.freq) && nadir_satisfied(&s, &case.freq)
}

/// Runs and caches arms for one case.
pub struct Runner {
    bundle: CaseBundle,
    settings: RunSettings,
    cache: BTreeMap<String, ArmRun>,
}

impl Runner {
    pub fn new(bundle: CaseBundle, settings: RunSettings) -> Self {
        Self {
            bundle,
            settings,
            cache: BTreeMap::new(),
        }
    }

    pub fn settings(&self) -> &RunSettings {
        &self.settings
    }

    pub fn case(&self) -> &SystemCase {
        &self.bundle.case
    }

    /// Every arm solved so far, by key.
    pub fn arms(&self) -> impl Iterator<Item = &ArmRun> {
        self.cache.values()
    }

    pub fn arm_case(&self, cfg: &ArmConfig) -> SystemCase {
        let mut c = self.bundle.case.clone();
        c.secured = cfg.secured;
        c.efr_procured_cap = cfg.efr_cap;
        c.freq.standard = cfg.standard;
        if cfg.standard == ReliabilityStandard::N2Fixed {
            c.freq.p_loss_fixed = self.settings.n2_loss;
        }
        if let Some(r) = self.settings.rocof {
            c.freq.rocof_max = r;
        }
        c
    }

    /// The arm for `cfg` over `periods`, solving it on first use.
    pub fn arm(&mut self, cfg: ArmConfig, periods: &[Period]) -> Result<&ArmRun, ExperimentError> {
        let mut key = cfg.key();
        if periods != self.settings.periods.as_slice() {
            for p in periods {
                key.push_str(&format!("@{}", p.start));
            }
        }
        if !self.cache.contains_key(&key) {
            let run = self.solve_arm(cfg, periods, &key)?;
            self.cache.insert(key.clone(), run);
        }
        Ok(&self.cache[&key])
    }

    fn solve_arm(&self, cfg: ArmConfig, periods: &[Period], key: &str) -> Result<ArmRun, ExperimentError> {
        let s = &self.settings;
        let case = self.arm_case(&cfg);
        let mut model = self.bundle.forecast.clone();
        if let Some(b) = &s.branching_stages {
            model.branching_stages = b.clone();
        }
        let cuts = default_nadir_cuts(&case.freq);
        let available = case.demand.len().min(case.res_forecast.len());
        let mut runs = Vec::with_capacity(periods.len());
        for p in periods {
            let end = p.start + p.steps + s.lookahead - 1;
            if p.start < s.warmup || end > available {
                return Err(ExperimentError::PeriodOutOfRange {
                    period: p.name.clone(),
                    first: p.start as isize - s.warmup as isize,
                    end,
                    available,
                });
            }
            let mut opts = RollingOptions::new(&case, model.clone(), cuts.clone());
            opts.lookahead = s.lookahead;
            opts.warmup = s.warmup;
            opts.start = p.start - s.warmup;
            opts.trace = s.seed.map_or(TracePath::Median, TracePath::Sampled);
            opts.uc = UcOptions::for_case(&case, s.lookahead);
            opts.tolerances.time_limit = s.time_limit;
            let out = rolling_run(&case, &opts, p.steps).map_err(|source| ExperimentError::Run {
                arm: key.to_string(),
                period: p.name.clone(),
                source,
            })?;
            log::info!(
                "arm {key}, {}: cost {:.0}, {} insecure hours, {:.1}s solving",
                p.name,
                out.result.total_cost,
                out.insecure.len(),
                out.solve_time.as_secs_f64()
            );
            runs.push((p.clone(), out));
        }
        Ok(ArmRun {
            key: key.to_string(),
            config: cfg,
            case,
            runs,
        })
    }

    fn default_arm(&self) -> ArmConfig {
        if self.settings.unsecured {
            ArmConfig::unsecured()
        } else {
            let c = &self.bundle.case;
            ArmConfig::secured(c.efr_procured_cap, c.freq.standard)
        }
    }

    pub fn cost_split(&mut self) -> Result<CostSplitReport, ExperimentError> {
        let periods = self.settings.periods.clone();
        let c = &self.bundle.case;
        let cfg = ArmConfig::secured(c.efr_procured_cap, c.freq.standard);
        let sec = self.arm(cfg, &periods)?.clone();
        let uns = self.arm(ArmConfig::unsecured(), &periods)?.clone();
        let secured_cost = sec.total_cost();
        let unsecured_cost = uns.total_cost();
        let ancillary_cost = secured_cost - unsecured_cost;
        Ok(CostSplitReport {
            secured: sec.costs(),
            unsecured: uns.costs(),
            secured_cost,
            unsecured_cost,
            ancillary_cost,
            share_percent: if secured_cost > 0.0 {
                100.0 * ancillary_cost / secured_cost
            } else {
                0.0
            },
            hours: sec.hours(),
            issues: Issues::of(&[&sec, &uns]),
            hourly: [sec.schedules(), uns.schedules()].concat(),
        })
    }

    pub fn inertia_hist(&mut self) -> Result<InertiaHistReport, ExperimentError> {
        let periods = self.settings.periods.clone();
        let cfg = self.default_arm();
        let arm = self.arm(cfg, &periods)?.clone();
        let h: Vec<f64> = arm.records().map(|r| r.inertia / 1000.0).collect();
        let bins = histogram(&h);
        let counts: Vec<usize> = bins.iter().map(|b| b.hours).collect();
        let modes = find_modes(&counts).into_iter().map(|i| bins[i].lo_gvas).collect();
        let floor = rocof_floor(&arm.case);
        Ok(InertiaHistReport {
            bins,
            modes_gvas: modes,
            min_inertia_gvas: h.iter().copied().fold(f64::INFINITY, f64::min),
            rocof_floor_gvas: floor / 1000.0,
            below_floor_hours: arm.records().filter(|r| below_floor(r, &arm.case)).count(),
            hours: h.len(),
            issues: Issues::of(&[&arm]),
            hourly: arm.schedules(),
        })
    }

    pub fn week_profile(&mut self) -> Result<WeekProfileReport, ExperimentError> {
        let s = &self.settings;
        let steps = s.periods.first().map_or(WEEK, |p| p.steps);
        let period = high_res_week(&self.bundle.case, steps, s.warmup, s.lookahead);
        let cfg = self.default_arm();
        let arm = self.arm(cfg, std::slice::from_ref(&period))?.clone();
        let fleet = &arm.case.thermal;
        let cats: Vec<Category> = fleet.iter().map(|u| Category::of(&u.name)).collect();
        let mut rows = Vec::with_capacity(arm.hours());
        for r in arm.records() {
            let mut by_cat = [0.0; Category::COUNT];
            let mut gas_committed = 0.0;
            for ((d, u), &c) in r.thermal.iter().zip(fleet).zip(&cats) {
                by_cat[c as usize] += d.output;
                if c == Category::Gas {
                    gas_committed += d.committed * u.p_max;
                }
            }
            rows.push(WeekRow {
                t: r.t,
                hour: period.start + r.t,
                demand_mw: r.demand,
                nuclear_mw: by_cat[Category::Nuclear as usize],
                gas_mw: by_cat[Category::Gas as usize],
                biomass_mw: by_cat[Category::Biomass as usize],
                ocgt_mw: by_cat[Category::Ocgt as usize],
                other_thermal_mw: by_cat[Category::Other as usize],
                storage_net_mw: r.storage.iter().map(|s| s.discharge - s.charge).sum(),
                res_used_mw: r.res - r.curtailment,
                curtailment_mw: r.curtailment,
                shed_mw: r.shed,
                committed_sync_mw: r.committed_capacity(fleet),
                gas_committed_mw: gas_committed,
                inertia_gvas: r.inertia / 1000.0,
            });
        }
        let signature_hours = rows
            .iter()
            .filter(|w| w.curtailment_mw > SIGNATURE_TOL && w.committed_sync_mw > SIGNATURE_TOL)
            .count();
        let floor = rocof_floor(&arm.case);
        Ok(WeekProfileReport {
            period,
            signature_hours,
            min_inertia_gvas: rows.iter().map(|w| w.inertia_gvas).fold(f64::INFINITY, f64::min),
            rocof_floor_gvas: floor / 1000.0,
            max_category_residual: rows.iter().map(|w| w.residual().abs()).fold(0.0, f64::max),
            rows,
            issues: Issues::of(&[&arm]),
            hourly: arm.schedules(),
        })
    }

    pub fn efr_sweep(&mut self, caps: &[f64]) -> Result<EfrSweepReport, ExperimentError> {
        if caps.is_empty() {
            return Err(ExperimentError::EmptySweep("efr_sweep"));
        }
        let periods = self.settings.periods.clone();
        let standard = self.bundle.case.freq.standard;
        let uns = self.arm(ArmConfig::unsecured(), &periods)?.clone();
        let unsecured_cost = uns.total_cost();
        let mut arms = vec![uns];
        let mut rows = Vec::with_capacity(caps.len());
        for &cap in caps {
            let arm = self.arm(ArmConfig::secured(cap, standard), &periods)?.clone();
            rows.push(EfrRow {
                efr_cap_mw: cap,
                secured_cost: arm.total_cost(),
                ancillary_cost: arm.total_cost() - unsecured_cost,
                insecure_hours: arm.insecure_hours(),
            });
            arms.push(arm);
        }
        let refs: Vec<&ArmRun> = arms.iter().collect();
        Ok(EfrSweepReport {
            unsecured_cost,
            rows,
            issues: Issues::of(&refs),
            hourly: arms.iter().flat_map(|a| a.schedules()).collect(),
        })
    }

    pub fn reliability_compare(
        &mut self,
        standards: &[ReliabilityStandard],
        efr_cap: f64,
    ) -> Result<ReliabilityReport, ExperimentError> {
        if standards.is_empty() {
            return Err(ExperimentError::EmptySweep("reliability_compare"));
        }
        let periods = self.settings.periods.clone();
        let uns = self.arm(ArmConfig::unsecured(), &periods)?.clone();
        let unsecured_cost = uns.total_cost();
        let mut arms = vec![uns];
        let mut rows = Vec::with_capacity(standards.len());
        for &std in standards {
            let arm = self.arm(ArmConfig::secured(efr_cap, std), &periods)?.clone();
            let hours = arm.hours().max(1) as f64;
            rows.push(ReliabilityRow {
                standard: std,
                secured_cost: arm.total_cost(),
                ancillary_cost: arm.total_cost() - unsecured_cost,
                mean_p_loss_mw: arm.records().map(|r| r.p_loss).sum::<f64>() / hours,
                insecure_hours: arm.insecure_hours(),
            });
            arms.push(arm);
        }
        let refs: Vec<&ArmRun> = arms.iter().collect();
        Ok(ReliabilityReport {
            efr_cap_mw: efr_cap,
            unsecured_cost,
            rows,
            issues: Issues::of(&refs),
            hourly: arms.iter().flat_map(|a| a.schedules()).collect(),
        })
    }
}

/// Curtailment and committed capacity above this count as positive, MW.
const SIGNATURE_TOL: f64 = 1e-6;

fn rocof_floor(case: &SystemCase) -> f64 {
    min_inertia_for_rocof(case.freq.p_loss_fixed, &case.freq).unwrap_or(0.0)
}

fn below_floor(r: &NodeRecord, case: &SystemCase) -> bool {
    let s = FrequencyState {
        h: r.inertia,
        efr: r.efr,
        pfr: r.pfr,
        p_loss: r.p_loss,
    };
    !rocof_satisfied(&s, &case.freq)
}

/// Hours needing attention across the arms of a report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Issues {
    pub insecure_hours: usize,
    pub shed_mwh: f64,
}

impl Issues {
    fn of(arms: &[&ArmRun]) -> Self {
        Self {
            insecure_hours: arms.iter().map(|a| a.insecure_hours()).sum(),
            shed_mwh: arms.iter().map(|a| a.shed_mwh()).sum(),
        }
    }

    /// Some hour was left insecure or shed load.
    pub fn any(&self) -> bool {
        self.insecure_hours > 0 || self.shed_mwh > 1e-6
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSplitReport {
    pub secured: CostBreakdown,
    pub unsecured: CostBreakdown,
    pub secured_cost: f64,
    pub unsecured_cost: f64,
    pub ancillary_cost: f64,
    /// Ancillary cost as a share of the secured operating cost, %.
    pub share_percent: f64,
    pub hours: usize,
    pub issues: Issues,
    pub hourly: Vec<(String, ScheduleResult)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub lo_gvas: f64,
    pub hi_gvas: f64,
    pub hours: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InertiaHistReport {
    /// 1 GVA·s bins from the lowest to the highest observed hour.
    pub bins: Vec<HistBin>,
    pub modes_gvas: Vec<f64>,
    pub min_inertia_gvas: f64,
    pub rocof_floor_gvas: f64,
    pub below_floor_hours: usize,
    pub hours: usize,
    pub issues: Issues,
    pub hourly: Vec<(String, ScheduleResult)>,
}

/// Bins values into unit-width bins.
pub fn histogram(values: &[f64]) -> Vec<HistBin> {
    let Some(lo) = values.iter().map(|v| v.floor()).reduce(f64::min) else {
        return Vec::new();
    };
    let hi = values.iter().map(|v| v.floor()).fold(lo, f64::max);
    let n = (hi - lo) as usize + 1;
    let mut counts = vec![0; n];
    for v in values {
        counts[(v.floor() - lo) as usize] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, hours)| HistBin {
            lo_gvas: lo + i as f64,
            hi_gvas: lo + i as f64 + 1.0,
            hours,
        })
        .collect()
}

/// Peaks of a histogram smoothed over five bins, keeping those holding at
/// least a tenth of the tallest peak.
pub fn find_modes(counts: &[usize]) -> Vec<usize> {
    let n = counts.len();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let a = i.saturating_sub(2);
            let b = (i + 3).min(n);
            counts[a..b].iter().sum::<usize>() as f64 / 5.0
        })
        .collect();
    let top = smooth.iter().copied().fold(0.0, f64::max);
    let mut modes = Vec::new();
    let mut i = 0;
    while i < n {
        // Plateaus count once, at their first bin.
        let mut j = i;
        while j + 1 < n && smooth[j + 1] == smooth[i] {
            j += 1;
        }
        let left = i == 0 || smooth[i - 1] < smooth[i];
        let right = j + 1 == n || smooth[j + 1] < smooth[i];
        if left && right && smooth[i] > 0.0 && smooth[i] >= 0.1 * top {
            modes.push(i);
        }
        i = j + 1;
    }
    modes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    Nuclear,
    Gas,
    Biomass,
    Ocgt,
    Other,
}

impl Category {
    const COUNT: usize = 5;

    fn of(name: &str) -> Self {
        let n = name.to_lowercase();
        if n.contains("nuclear") || n.contains("hinkley") {
            Category::Nuclear
        } else if n.contains("ocgt") {
            Category::Ocgt
        } else if n.contains("gas") || n.contains("ccgt") {
            Category::Gas
        } else if n.contains("biomass") || n.contains("becss") || n.contains("beccs") {
            Category::Biomass
        } else {
            Category::Other
        }
    }
}

/// One hour of the stacked dispatch export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeekRow {
    pub t: usize,
    /// Absolute profile hour.
    pub hour: usize,
    pub demand_mw: f64,
    pub nuclear_mw: f64,
    pub gas_mw: f64,
    pub biomass_mw: f64,
    pub ocgt_mw: f64,
    pub other_thermal_mw: f64,
    /// Discharge minus charge over all storage.
    pub storage_net_mw: f64,
    pub res_used_mw: f64,
    pub curtailment_mw: f64,
    pub shed_mw: f64,
    pub committed_sync_mw: f64,
    pub gas_committed_mw: f64,
    pub inertia_gvas: f64,
}

impl WeekRow {
    /// Category sum minus demand.
    pub fn residual(&self) -> f64 {
        self.nuclear_mw
            + self.gas_mw
            + self.biomass_mw
            + self.ocgt_mw
            + self.other_thermal_mw
            + self.storage_net_mw
            + self.res_used_mw
            + self.shed_mw
            - self.demand_mw
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeekProfileReport {
    pub period: Period,
    pub rows: Vec<WeekRow>,
    /// Hours with positive curtailment and positive committed synchronous
    /// capacity.
    pub signature_hours: usize,
    pub min_inertia_gvas: f64,
    pub rocof_floor_gvas: f64,
    pub max_category_residual: f64,
    pub issues: Issues,
    pub hourly: Vec<(String, ScheduleResult)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfrRow {
    pub efr_cap_mw: f64,
    pub secured_cost: f64,
    pub ancillary_cost: f64,
    pub insecure_hours: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfrSweepReport {
    pub unsecured_cost: f64,
    pub rows: Vec<EfrRow>,
    pub issues: Issues,
    pub hourly: Vec<(String, ScheduleResult)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub standard: ReliabilityStandard,
    pub secured_cost: f64,
    pub ancillary_cost: f64,
    /// Mean secured contingency size; under the optimized standard this is the
    /// mean output of the largest unit.
    pub mean_p_loss_mw: f64,
    pub insecure_hours: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityReport {
    pub efr_cap_mw: f64,
    pub unsecured_cost: f64,
    pub rows: Vec<ReliabilityRow>,
    pub issues: Issues,
    pub hourly: Vec<(String, ScheduleResult)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    CostSplit(CostSplitReport),
    InertiaHist(InertiaHistReport),
    WeekProfile(WeekProfileReport),
    EfrSweep(EfrSweepReport),
    ReliabilityCompare(ReliabilityReport),
}

/// A full experiment request.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub efr_caps: Vec<f64>,
    pub standards: Vec<ReliabilityStandard>,
    /// EFR cap of the reliability comparison, MW.
    pub reliability_efr_cap: f64,
    pub settings: RunSettings,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            efr_caps: vec![500.0, 1000.0, 1500.0],
            standards: ReliabilityStandard::ALL.to_vec(),
            reliability_efr_cap: 1500.0,
            settings: RunSettings::desk_scale(),
        }
    }
}

pub fn run_experiment(bundle: &CaseBundle, spec: &ExperimentSpec) -> Result<Report, ExperimentError> {
    let mut runner = Runner::new(bundle.clone(), spec.settings.clone());
    run_with(&mut runner, spec)
}

/// [`run_experiment`] on an existing runner, reusing its cached arms.
pub fn run_with(runner: &mut Runner, spec: &ExperimentSpec) -> Result<Report, ExperimentError> {
    Ok(match spec.kind {
        ExperimentKind::CostSplit => Report::CostSplit(runner.cost_split()?),
        ExperimentKind::InertiaHist => Report::InertiaHist(runner.inertia_hist()?),
        ExperimentKind::WeekProfile => Report::WeekProfile(runner.week_profile()?),
        ExperimentKind::EfrSweep => Report::EfrSweep(runner.efr_sweep(&spec.efr_caps)?),
        ExperimentKind::ReliabilityCompare => Report::ReliabilityCompare(
            runner.reliability_compare(&spec.standards, spec.reliability_efr_cap)?,
        ),
    })
}

impl Report {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            Report::CostSplit(_) => ExperimentKind::CostSplit,
            Report::InertiaHist(_) => ExperimentKind::InertiaHist,
            Report::WeekProfile(_) => ExperimentKind::WeekProfile,
            Report::EfrSweep(_) => ExperimentKind::EfrSweep,
            Report::ReliabilityCompare(_) => ExperimentKind::ReliabilityCompare,
        }
    }

    pub fn issues(&self) -> Issues {
        match self {
            Report::CostSplit(r) => r.issues,
            Report::InertiaHist(r) => r.issues,
            Report::WeekProfile(r) => r.issues,
            Report::EfrSweep(r) => r.issues,
            Report::ReliabilityCompare(r) => r.issues,
        }
    }

    fn hourly(&self) -> &[(String, ScheduleResult)] {
        match self {
            Report::CostSplit(r) => &r.hourly,
            Report::InertiaHist(r) => &r.hourly,
            Report::WeekProfile(r) => &r.hourly,
            Report::EfrSweep(r) => &r.hourly,
            Report::ReliabilityCompare(r) => &r.hourly,
        }
    }

    /// Summary table: a header and rows of plain values.
    pub fn summary(&self) -> (Vec<&'static str>, Vec<Vec<String>>) {
        let f = |x: f64| x.to_string();
        match self {
            Report::CostSplit(r) => {
                let row = |arm: &str, c: &CostBreakdown| {
                    vec![
                        arm.to_string(),
                        f(c.no_load),
                        f(c.marginal),
                        f(c.startup),
                        f(c.shed_penalty),
                        f(c.total()),
                    ]
                };
                let mut anc = vec!["ancillary".to_string()];
                anc.extend(
                    [
                        r.secured.no_load - r.unsecured.no_load,
                        r.secured.marginal - r.unsecured.marginal,
                        r.secured.startup - r.unsecured.startup,
                        r.secured.shed_penalty - r.unsecured.shed_penalty,
                        r.ancillary_cost,
                    ]
                    .map(f),
                );
                (
                    vec!["arm", "no_load", "marginal", "startup", "shed_penalty", "total"],
                    vec![row("secured", &r.secured), row("unsecured", &r.unsecured), anc],
                )
            }
            Report::InertiaHist(r) => (
                vec!["lo_gvas", "hi_gvas", "hours", "mode"],
                r.bins
                    .iter()
                    .map(|b| {
                        let mode = r.modes_gvas.contains(&b.lo_gvas);
                        vec![f(b.lo_gvas), f(b.hi_gvas), b.hours.to_string(), (mode as u8).to_string()]
                    })
                    .collect(),
            ),
            Report::WeekProfile(r) => (
                vec![
                    "t",
                    "hour",
                    "demand_mw",
                    "nuclear_mw",
                    "gas_mw",
                    "biomass_mw",
                    "ocgt_mw",
                    "other_thermal_mw",
                    "storage_net_mw",
                    "res_used_mw",
                    "curtailment_mw",
                    "shed_mw",
                    "committed_sync_mw",
                    "gas_committed_mw",
                    "inertia_gvas",
                ],
                r.rows
                    .iter()
                    .map(|w| {
                        let mut v = vec![w.t.to_string(), w.hour.to_string()];
                        v.extend(
                            [
                                w.demand_mw,
                                w.nuclear_mw,
                                w.gas_mw,
                                w.biomass_mw,
                                w.ocgt_mw,
                                w.other_thermal_mw,
                                w.storage_net_mw,
                                w.res_used_mw,
                                w.curtailment_mw,
                                w.shed_mw,
                                w.committed_sync_mw,
                                w.gas_committed_mw,
                                w.inertia_gvas,
                            ]
                            .map(f),
                        );
                        v
                    })
                    .collect(),
            ),
            Report::EfrSweep(r) => (
                vec!["efr_cap_mw", "secured_cost", "unsecured_cost", "ancillary_cost", "insecure_hours"],
                r.rows
                    .iter()
                    .map(|e| {
                        vec![
                            f(e.efr_cap_mw),
                            f(e.secured_cost),
                            f(r.unsecured_cost),
                            f(e.ancillary_cost),
                            e.insecure_hours.to_string(),
                        ]
                    })
                    .collect(),
            ),
            Report::ReliabilityCompare(r) => (
                vec![
                    "standard",
                    "efr_cap_mw",
                    "secured_cost",
                    "unsecured_cost",
                    "ancillary_cost",
                    "mean_p_loss_mw",
                    "insecure_hours",
                ],
                r.rows
                    .iter()
                    .map(|e| {
                        vec![
                            e.standard.label().to_string(),
                            f(r.efr_cap_mw),
                            f(e.secured_cost),
                            f(r.unsecured_cost),
                            f(e.ancillary_cost),
                            f(e.mean_p_loss_mw),
                            e.insecure_hours.to_string(),
                        ]
                    })
                    .collect(),
            ),
        }
    }

    /// Headline numbers as `key,value` lines.
    pub fn headline(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        match self {
            Report::CostSplit(r) => {
                put("secured_cost", r.secured_cost.to_string());
                put("unsecured_cost", r.unsecured_cost.to_string());
                put("ancillary_cost", r.ancillary_cost.to_string());
                put("share_percent", r.share_percent.to_string());
                put("hours", r.hours.to_string());
            }
            Report::InertiaHist(r) => {
                put("hours", r.hours.to_string());
                put("modes", r.modes_gvas.len().to_string());
                put("min_inertia_gvas", r.min_inertia_gvas.to_string());
                put("rocof_floor_gvas", r.rocof_floor_gvas.to_string());
                put("below_floor_hours", r.below_floor_hours.to_string());
            }
            Report::WeekProfile(r) => {
                put("period_start", r.period.start.to_string());
                put("signature_hours", r.signature_hours.to_string());
                put("min_inertia_gvas", r.min_inertia_gvas.to_string());
                put("rocof_floor_gvas", r.rocof_floor_gvas.to_string());
                put("max_category_residual_mw", r.max_category_residual.to_string());
            }
            Report::EfrSweep(r) => put("unsecured_cost", r.unsecured_cost.to_string()),
            Report::ReliabilityCompare(r) => {
                put("efr_cap_mw", r.efr_cap_mw.to_string());
                put("unsecured_cost", r.unsecured_cost.to_string());
            }
        }
        let issues = self.issues();
        put("insecure_hours", issues.insecure_hours.to_string());
        put("shed_mwh", issues.shed_mwh.to_string());
        out
    }

    /// Writes the summary table, headline numbers, one hourly table per arm
    /// and period, and a plotting script into `dir`. Returns the paths
    /// written, in order.
    pub fn write_exports(&self, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
        fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let name = self.kind().name();
        let mut written = Vec::new();

        let path = dir.join(format!("{name}.csv"));
        let (header, rows) = self.summary();
        write_csv(&path, &header, &rows)?;
        written.push(path);

        let path = dir.join(format!("{name}_headline.csv"));
        let rows: Vec<Vec<String>> = self.headline().into_iter().map(|(k, v)| vec![k, v]).collect();
        write_csv(&path, &["key", "value"], &rows)?;
        written.push(path);

        for (label, result) in self.hourly() {
            let path = dir.join(format!("hourly_{label}.csv"));
            write_table_file(result, &path)?;
            written.push(path);
        }

        let path = dir.join(format!("plot_{name}.py"));
        fs::write(&path, plot_script(self.kind())).map_err(|source| ExperimentError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
        Ok(written)
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), ExperimentError> {
    let csv_err = |source| ExperimentError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Plotting script stub for an experiment's summary table.
pub fn plot_script(kind: ExperimentKind) -> String {
    let name = kind.name();
    let body = match kind {
        ExperimentKind::CostSplit => {
            "rows = df.set_index(\"arm\").loc[[\"unsecured\", \"ancillary\"], \"total\"]\n\
             ax.bar([\"energy\", \"ancillary\"], rows.values / 1e6)\n\
             ax.set_ylabel(\"cost (m GBP)\")\n"
        }
        ExperimentKind::InertiaHist => {
            "ax.bar(df.lo_gvas, df.hours, width=1.0, align=\"edge\")\n\
             ax.set_xlabel(\"inertia (GVA s)\")\n\
             ax.set_ylabel(\"hours\")\n"
        }
        ExperimentKind::WeekProfile => {
            "cols = [\"nuclear_mw\", \"biomass_mw\", \"gas_mw\", \"ocgt_mw\", \"other_thermal_mw\", \"storage_net_mw\", \"res_used_mw\"]\n\
             ax.stackplot(df.t, *(df[c].clip(lower=0) for c in cols), labels=cols)\n\
             ax.plot(df.t, df.demand_mw, \"k\", label=\"demand\")\n\
             ax.plot(df.t, df.demand_mw + df.curtailment_mw, \"k:\", label=\"demand + curtailment\")\n\
             ax.legend(fontsize=\"small\")\n\
             ax.set_ylabel(\"MW\")\n"
        }
        ExperimentKind::EfrSweep => {
            "ax.bar(df.efr_cap_mw.astype(str), df.ancillary_cost / 1e6)\n\
             ax.set_xlabel(\"EFR procured (MW)\")\n\
             ax.set_ylabel(\"ancillary cost (m GBP)\")\n"
        }
        ExperimentKind::ReliabilityCompare => {
            "ax.bar(df.standard, df.ancillary_cost / 1e6)\n\
             ax.set_ylabel(\"ancillary cost (m GBP)\")\n"
        }
    };
    format!(
        "# Generated plotting stub for {name}.csv\n\
         import sys\n\
         import pandas as pd\n\
         import matplotlib.pyplot as plt\n\
         \n\
         df = pd.read_csv(sys.argv[1] if len(sys.argv) > 1 else \"{name}.csv\")\n\
         fig, ax = plt.subplots(figsize=(8, 4))\n\
         {body}\
         fig.tight_layout()\n\
         fig.savefig(\"{name}.png\", dpi=150)\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_mass_is_run_length() {
        let v = [45.2, 45.9, 46.1, 80.0, 80.5];
        let bins = histogram(&v);
        assert_eq!(bins.first().unwrap().lo_gvas, 45.0);
        assert_eq!(bins.last().unwrap().lo_gvas, 80.0);
        assert_eq!(bins.iter().map(|b| b.hours).sum::<usize>(), v.len());
    }

    #[test]
    fn two_separated_bumps_give_two_modes() {
        let mut counts = vec![0; 60];
        for (i, c) in counts.iter_mut().enumerate() {
            let a = (-((i as f64 - 10.0) / 3.0).powi(2)).exp();
            let b = (-((i as f64 - 45.0) / 4.0).powi(2)).exp();
            *c = (100.0 * (a + 0.7 * b)).round() as usize;
        }
        let modes = find_modes(&counts);
        assert_eq!(modes.len(), 2, "{modes:?}");
        assert!((modes[0] as i64 - 10).abs() <= 1);
        assert!((modes[1] as i64 - 45).abs() <= 1);
    }

    #[test]
    fn single_bin_has_one_mode() {
        assert_eq!(find_modes(&[7]), vec![0]);
    }

    #[test]
    fn kinds_parse_by_name() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!("fig9".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn unsecured_arms_share_a_key() {
        let a = ArmConfig::unsecured();
        let b = ArmConfig {
            efr_cap: 1500.0,
            ..ArmConfig::unsecured()
        };
        assert_eq!(a.key(), b.key());
        assert_ne!(
            ArmConfig::secured(500.0, ReliabilityStandard::N1Fixed).key(),
            ArmConfig::secured(1000.0, ReliabilityStandard::N1Fixed).key()
        );
    }

    #[test]
    fn categories_follow_fleet_names() {
        assert_eq!(Category::of("Hinkley Point C"), Category::Nuclear);
        assert_eq!(Category::of("Gas CCS"), Category::Gas);
        assert_eq!(Category::of("OCGT"), Category::Ocgt);
        assert_eq!(Category::of("BECSS"), Category::Biomass);
        assert_eq!(Category::of("Tidal"), Category::Other);
    }
}
