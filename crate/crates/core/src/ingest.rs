//! Case files, synthetic profiles and result persistence.
//!
//! A case file is TOML with `thermal`, `storage`, `freq`, `scenario` and
//! `profiles` sections. Profiles come from CSV files (`hour,mw`), inline
//! arrays, or the synthetic generator.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coretypes::{
    validate_case, FreqSecurityParams, ScheduleResult, StorageUnit, SystemCase, ThermalUnit,
    Violation,
};
use crate::scenario::ForecastErrorModel;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("{path}: case is invalid: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid {
        path: PathBuf,
        violations: Vec<Violation>,
    },
    #[error("{path}: profile '{name}' is missing")]
    MissingProfile { path: PathBuf, name: &'static str },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub seed: u64,
    pub days: usize,
    pub demand_peak: f64,
    pub demand_min: f64,
    pub wind_cap: f64,
    pub solar_cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeriesSource {
    File { file: PathBuf },
    Values { values: Vec<f64> },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfilesSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthParams>,
    /// Overrides the synthetic demand when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<SeriesSource>,
    /// Overrides the synthetic RES when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub res: Option<SeriesSource>,
}

/// On-disk case document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub name: String,
    pub voll: f64,
    pub efr_procured_cap: f64,
    pub secured: bool,
    #[serde(default)]
    pub freq: FreqSecurityParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ForecastErrorModel>,
    pub profiles: ProfilesSection,
    #[serde(default)]
    pub thermal: Vec<ThermalUnit>,
    #[serde(default)]
    pub storage: Vec<StorageUnit>,
}

/// A loaded case and the forecast-error model that goes with it.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseBundle {
    pub case: SystemCase,
    pub forecast: ForecastErrorModel,
}

const GB2030: &str = include_str!("../data/gb2030.toml");

/// The bundled GB 2030 case with a synthetic year of profiles.
pub fn gb2030() -> CaseBundle {
    parse_case(GB2030, Path::new("gb2030"), Path::new(".")).expect("bundled case is valid")
}

/// Text of the bundled case file.
pub fn gb2030_source() -> &'static str {
    GB2030
}

pub fn load_case(path: &Path) -> Result<SystemCase, IngestError> {
    load_case_bundle(path).map(|b| b.case)
}

/// Loads a case file, or the bundled case when `path` is `gb2030`.
pub fn load_case_bundle(path: &Path) -> Result<CaseBundle, IngestError> {
    if path == Path::new("gb2030") && !path.exists() {
        return Ok(gb2030());
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_case(&text, path, base)
}

/// Parses case text. Relative profile paths resolve against `base`.
pub fn parse_case(text: &str, path: &Path, base: &Path) -> Result<CaseBundle, IngestError> {
    let file: CaseFile = toml::from_str(text).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let synth = file.profiles.synthetic.map(|p| synth_profiles(&p));
    let series = |src: &Option<SeriesSource>,
                  fallback: Option<&Vec<f64>>,
                  name: &'static str|
     -> Result<Vec<f64>, IngestError> {
        match src {
            Some(SeriesSource::Values { values }) => Ok(values.clone()),
            Some(SeriesSource::File { file }) => read_series(&base.join(file)),
            None => fallback.cloned().ok_or(IngestError::MissingProfile {
                path: path.to_path_buf(),
                name,
            }),
        }
    };
    let demand = series(&file.profiles.demand, synth.as_ref().map(|s| &s.demand), "demand")?;
    let res = series(&file.profiles.res, synth.as_ref().map(|s| &s.res), "res")?;
    let res_capacity = file
        .profiles
        .synthetic
        .map(|p| p.wind_cap + p.solar_cap)
        .unwrap_or_else(|| res.iter().copied().fold(0.0, f64::max));
    let case = SystemCase {
        name: file.name,
        thermal: file.thermal,
        storage: file.storage,
        demand,
        res_forecast: res,
        voll: file.voll,
        freq: file.freq,
        efr_procured_cap: file.efr_procured_cap,
        secured: file.secured,
    };
    let violations = validate_case(&case);
    if !violations.is_empty() {
        return Err(IngestError::Invalid {
            path: path.to_path_buf(),
            violations,
        });
    }
    let forecast = file
        .scenario
        .unwrap_or_else(|| ForecastErrorModel::new(res_capacity));
    Ok(CaseBundle { case, forecast })
}

/// Writes a case with inline profile arrays.
pub fn save_case(bundle: &CaseBundle, path: &Path) -> Result<(), IngestError> {
    let c = &bundle.case;
    let file = CaseFile {
        name: c.name.clone(),
        voll: c.voll,
        efr_procured_cap: c.efr_procured_cap,
        secured: c.secured,
        freq: c.freq.clone(),
        scenario: Some(bundle.forecast.clone()),
        profiles: ProfilesSection {
            synthetic: None,
            demand: Some(SeriesSource::Values {
                values: c.demand.clone(),
            }),
            res: Some(SeriesSource::Values {
                values: c.res_forecast.clone(),
            }),
        },
        thermal: c.thermal.clone(),
        storage: c.storage.clone(),
    };
    let text = toml::to_string(&file).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    fs::write(path, text).map_err(io_err(path))
}

/// Reads an `hour,mw` CSV with a header row.
pub fn read_series(path: &Path) -> Result<Vec<f64>, IngestError> {
    let csv_err = |source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<(usize, f64)>() {
        let (_, mw) = rec.map_err(csv_err)?;
        out.push(mw);
    }
    Ok(out)
}

pub fn write_series(path: &Path, values: &[f64]) -> Result<(), IngestError> {
    let csv_err = |source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["hour", "mw"]).map_err(csv_err)?;
    for (h, v) in values.iter().enumerate() {
        w.serialize((h, v)).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Hourly series from the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Profiles {
    pub demand: Vec<f64>,
    pub wind: Vec<f64>,
    pub solar: Vec<f64>,
    pub res: Vec<f64>,
}

/// Seeded hourly demand, wind and solar over `days` days starting 1 January.
///
/// Demand is a winter-peaking seasonal term plus a diurnal shape and a weekly
/// dip, min-max scaled onto `[demand_min, demand_peak]`. Solar is a clear-sky
/// bell between sunrise and sunset times a seeded daily cloud factor. Wind is
/// an AR(1) process pushed through the normal CDF, seasonally weighted.
pub fn synth_profiles(p: &SynthParams) -> Profiles {
    let hours = p.days * 24;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let normal = statrs::distribution::Normal::standard();
    use statrs::distribution::ContinuousCDF;

    let mut raw = Vec::with_capacity(hours);
    let mut noise = 0.0;
    for h in 0..hours {
        let day = (h / 24) as f64;
        let hod = (h % 24) as f64;
        let seasonal = (2.0 * PI * day / 365.0).cos();
        let diurnal = 0.5 * (-((hod - 18.5) / 2.5).powi(2)).exp()
            + 0.35 * (-((hod - 9.0) / 3.0).powi(2)).exp()
            - 0.45 * (-((hod - 3.5) / 3.0).powi(2)).exp();
        let weekend = if (h / 24) % 7 >= 5 { -0.12 } else { 0.0 };
        let e: f64 = StandardNormal.sample(&mut rng);
        noise = 0.9 * noise + 0.015 * e;
        raw.push(0.55 * seasonal + diurnal + weekend + noise);
    }
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let demand: Vec<f64> = raw
        .iter()
        .map(|x| p.demand_min + (x - lo) / span * (p.demand_peak - p.demand_min))
        .collect();

    let mut solar = Vec::with_capacity(hours);
    let mut cloud = 1.0;
    for h in 0..hours {
        if h % 24 == 0 {
            cloud = rng.random_range(0.25..1.0);
        }
        let day = (h / 24) as f64;
        let hod = (h % 24) as f64;
        // Day length from about 8 h in winter to 16 h in summer.
        let half = 6.0 - 2.0 * (2.0 * PI * day / 365.0).cos();
        let x = (hod - 12.5) / half;
        let shape = if x.abs() < 1.0 { (0.5 * PI * x).cos().powi(2) } else { 0.0 };
        let season = 0.65 - 0.35 * (2.0 * PI * day / 365.0).cos();
        solar.push(p.solar_cap * 0.9 * shape * season * cloud);
    }

    let mut wind = Vec::with_capacity(hours);
    let mut z = 0.0f64;
    for h in 0..hours {
        let e: f64 = StandardNormal.sample(&mut rng);
        z = 0.97 * z + (1.0 - 0.97f64 * 0.97).sqrt() * e;
        let day = (h / 24) as f64;
        let season = 0.12 * (2.0 * PI * day / 365.0).cos();
        let cf = normal.cdf(1.1 * z - 0.35 + season);
        wind.push(p.wind_cap * cf);
    }
    let res = wind.iter().zip(&solar).map(|(w, s)| w + s).collect();
    Profiles {
        demand,
        wind,
        solar,
        res,
    }
}

/// The case restricted to `len` steps starting at `start`.
pub fn window(case: &SystemCase, start: usize, len: usize) -> SystemCase {
    let mut c = case.clone();
    c.demand = case.demand[start..start + len].to_vec();
    c.res_forecast = case.res_forecast[start..start + len].to_vec();
    c
}

pub fn write_result(result: &ScheduleResult, path: &Path) -> Result<(), IngestError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer(&mut w, result).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    w.flush().map_err(io_err(path))
}

pub fn read_result(path: &Path) -> Result<ScheduleResult, IngestError> {
    let text = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&text).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Column names of the tabular export, in order.
pub fn table_header(result: &ScheduleResult) -> Vec<String> {
    let mut h: Vec<String> = [
        "node",
        "parent",
        "t",
        "probability",
        "demand_mw",
        "res_mw",
        "curtailment_mw",
        "shed_mw",
        "inertia_gvas",
        "p_loss_mw",
        "efr_mw",
        "pfr_mw",
        "uncovered_loss_mw",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for name in &result.thermal_names {
        for q in ["committed", "output_mw", "pfr_mw", "startup", "shutdown"] {
            h.push(format!("{name}:{q}"));
        }
    }
    for name in &result.storage_names {
        for q in ["charge_mw", "discharge_mw", "energy_mwh", "efr_mw", "mode"] {
            h.push(format!("{name}:{q}"));
        }
    }
    h
}

/// One row per record; inertia in GVA·s.
pub fn write_table<W: Write>(result: &ScheduleResult, w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(table_header(result))?;
    for r in &result.records {
        let mut row: Vec<String> = vec![
            r.node.to_string(),
            r.parent.map_or(String::new(), |p| p.to_string()),
            r.t.to_string(),
        ];
        let nums = [
            r.probability,
            r.demand,
            r.res,
            r.curtailment,
            r.shed,
            r.inertia / 1000.0,
            r.p_loss,
            r.efr,
            r.pfr,
            r.uncovered_loss,
        ];
        row.extend(nums.iter().map(|x| x.to_string()));
        for d in &r.thermal {
            for x in [d.committed, d.output, d.pfr, d.startup, d.shutdown] {
                row.push(x.to_string());
            }
        }
        for s in &r.storage {
            for x in [s.charge, s.discharge, s.energy, s.efr, s.mode] {
                row.push(x.to_string());
            }
        }
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_table_file(result: &ScheduleResult, path: &Path) -> Result<(), IngestError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    write_table(result, BufWriter::new(f)).map_err(|source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_case_matches_fleet_table() {
        let b = gb2030();
        let gas = b.case.thermal.iter().find(|u| u.name == "Gas CCS").unwrap();
        assert_eq!((gas.count, gas.p_max, gas.cost_marginal), (45, 500.0, 46.0));
        let bess = &b.case.storage[0];
        assert_eq!(bess.p_discharge_max, 9200.0);
        assert_eq!(bess.e_max / bess.p_discharge_max, 2.0);
        assert!((bess.eta_charge * bess.eta_discharge - 0.9).abs() < 1e-12);
        assert_eq!(b.case.demand.len(), 8760);
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        let err = parse_case("", Path::new("x.toml"), Path::new(".")).unwrap_err();
        assert!(matches!(err, IngestError::Parse { .. }));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{GB2030}\nbogus = 1\n");
        assert!(parse_case(&text, Path::new("x"), Path::new(".")).is_err());
    }

    #[test]
    fn synthetic_profiles_respect_bounds() {
        let p = SynthParams {
            seed: 7,
            days: 365,
            demand_peak: 60_000.0,
            demand_min: 20_000.0,
            wind_cap: 68_000.0,
            solar_cap: 30_000.0,
        };
        let s = synth_profiles(&p);
        let max = s.demand.iter().copied().fold(f64::MIN, f64::max);
        let min = s.demand.iter().copied().fold(f64::MAX, f64::min);
        assert!((max - 60_000.0).abs() <= 600.0 && (min - 20_000.0).abs() <= 200.0);
        assert!(s.solar.iter().step_by(24).all(|&x| x == 0.0));
        assert!(s.wind.iter().all(|&w| (0.0..=68_000.0).contains(&w)));
        assert_eq!(s, synth_profiles(&p));
    }
}
