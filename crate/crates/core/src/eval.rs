//! Analytic-versus-simulation comparison and parameter sweeps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::fer::FerTable;
use crate::load::{fit_compression, CbrCoefficients};
use crate::pdr::{default_distances, sweep, LinkCurve};
use crate::scenario::Scenario;
use crate::sim::{run_sim, SimParams, SimReport};
use crate::table;

/// Mean absolute deviation in percentage points, `100/M * sum |s - a|`.
pub fn mad(sim: &[f64], analytic: &[f64]) -> Result<f64> {
    if sim.len() != analytic.len() {
        return Err(Error::Domain(format!(
            "mad needs equal lengths, got {} and {}",
            sim.len(),
            analytic.len()
        )));
    }
    if sim.is_empty() {
        return Err(Error::Domain("mad needs at least one element".into()));
    }
    let sum: f64 = sim.iter().zip(analytic).map(|(s, a)| (s - a).abs()).sum();
    Ok(100.0 * sum / sim.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Bins with fewer attempts are left out of every MAD.
    pub min_attempts: u64,
    /// Bins centred beyond this distance are left out, m.
    pub max_distance_m: f64,
    pub mad_pdr_pct: f64,
    /// Limit for each of the four error MADs.
    pub mad_error_pct: f64,
    /// Limit on |analytic CBR - measured CBR|.
    pub cbr_abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { min_attempts: 200, max_distance_m: 800.0, mad_pdr_pct: 2.0, mad_error_pct: 5.0, cbr_abs: 0.03 }
    }
}

impl Tolerances {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&table::read_file(path)?)
            .map_err(|e| Error::Toml(format!("{}: {e}", path.display())))
    }
}

/// PDR and the four normalized errors at one distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub pdr: f64,
    pub dsen: f64,
    pub drxb: f64,
    pub dpro: f64,
    pub dcol: f64,
}

impl Metrics {
    fn as_array(&self) -> [f64; 5] {
        [self.pdr, self.dsen, self.drxb, self.dpro, self.dcol]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinResidual {
    pub distance_bin_m: f64,
    /// Where the analytic curve was evaluated.
    pub distance_m: f64,
    pub attempts: u64,
    pub sim: Metrics,
    pub analytic: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedBin {
    pub distance_bin_m: f64,
    pub attempts: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Fingerprint shared by the curve and the simulation.
    pub scenario: String,
    /// Config keys that differ from the sweep base, if any.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, String>,
    pub mad_pdr_pct: f64,
    pub mad_dsen_pct: f64,
    pub mad_drxb_pct: f64,
    pub mad_dpro_pct: f64,
    pub mad_dcol_pct: f64,
    pub cbr_u: f64,
    pub cbr_analytic: f64,
    pub cbr_measured: f64,
    pub pass: bool,
    pub failures: Vec<String>,
    pub residuals: Vec<BinResidual>,
    pub excluded: Vec<ExcludedBin>,
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Domain(format!("report serialization: {e}")))
    }
}

/// Scores `curve` against `report`, evaluating the curve at each bin's
/// attempt-weighted mean distance.
pub fn compare(curve: &LinkCurve, report: &SimReport, tol: &Tolerances) -> Result<ComparisonReport> {
    if curve.fingerprint != report.fingerprint {
        return Err(Error::FingerprintMismatch {
            curve: curve.fingerprint.clone(),
            sim: report.fingerprint.clone(),
        });
    }
    let mut residuals = Vec::new();
    let mut excluded = Vec::new();
    for b in &report.bins {
        if b.distance_bin_m > tol.max_distance_m {
            excluded.push(ExcludedBin {
                distance_bin_m: b.distance_bin_m,
                attempts: b.attempts,
                reason: format!("beyond {} m", tol.max_distance_m),
            });
            continue;
        }
        if b.attempts < tol.min_attempts {
            excluded.push(ExcludedBin {
                distance_bin_m: b.distance_bin_m,
                attempts: b.attempts,
                reason: format!("fewer than {} attempts", tol.min_attempts),
            });
            continue;
        }
        let p = curve
            .at(b.mean_distance_m)
            .ok_or_else(|| Error::Domain("analytic curve has no points".into()))?;
        let c = b.counts();
        let h = c.hats();
        residuals.push(BinResidual {
            distance_bin_m: b.distance_bin_m,
            distance_m: b.mean_distance_m,
            attempts: b.attempts,
            sim: Metrics { pdr: c.pdr(), dsen: h[0], drxb: h[1], dpro: h[2], dcol: h[3] },
            analytic: Metrics {
                pdr: p.pdr,
                dsen: p.dsen_hat,
                drxb: p.drxb_hat,
                dpro: p.dpro_hat,
                dcol: p.dcol_hat,
            },
        });
    }
    if residuals.is_empty() {
        return Err(Error::Domain(format!(
            "no simulation bin within {} m has at least {} attempts",
            tol.max_distance_m, tol.min_attempts
        )));
    }
    let mut m = [0.0; 5];
    for (k, slot) in m.iter_mut().enumerate() {
        let s: Vec<f64> = residuals.iter().map(|r| r.sim.as_array()[k]).collect();
        let a: Vec<f64> = residuals.iter().map(|r| r.analytic.as_array()[k]).collect();
        *slot = mad(&s, &a)?;
    }

    let mut failures = Vec::new();
    if m[0] > tol.mad_pdr_pct {
        failures.push(format!("pdr MAD {:.3}% > {}%", m[0], tol.mad_pdr_pct));
    }
    for (name, v) in ["dsen", "drxb", "dpro", "dcol"].iter().zip(&m[1..]) {
        if *v > tol.mad_error_pct {
            failures.push(format!("{name} MAD {v:.3}% > {}%", tol.mad_error_pct));
        }
    }
    let cbr_diff = (curve.cbr - report.cbr_measured).abs();
    if cbr_diff > tol.cbr_abs {
        failures.push(format!("CBR difference {cbr_diff:.4} > {}", tol.cbr_abs));
    }
    Ok(ComparisonReport {
        scenario: curve.fingerprint.clone(),
        overrides: BTreeMap::new(),
        mad_pdr_pct: m[0],
        mad_dsen_pct: m[1],
        mad_drxb_pct: m[2],
        mad_dpro_pct: m[3],
        mad_dcol_pct: m[4],
        cbr_u: curve.cbr_u,
        cbr_analytic: curve.cbr,
        cbr_measured: report.cbr_measured,
        pass: failures.is_empty(),
        failures,
        residuals,
        excluded,
    })
}

/// One row of the compression-fit dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbrSample {
    pub cbr_u: f64,
    pub cbr_measured: f64,
}

pub fn cbr_samples_to_csv(samples: &[CbrSample]) -> Result<String> {
    table::write_table(samples, &[])
}

pub fn cbr_samples_from_csv(text: &str, origin: &str) -> Result<Vec<CbrSample>> {
    Ok(table::read_table(text, origin)?.0)
}

pub fn fit_cbr_samples(samples: &[CbrSample]) -> Result<CbrCoefficients> {
    let pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.cbr_u, s.cbr_measured)).collect();
    fit_compression(&pts)
}

/// FER table for one data rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FerEntry {
    pub data_rate: f64,
    pub path: PathBuf,
}

/// Sweep description, read from TOML.
///
/// Points are the cross product of `grid` (keys in sorted order) followed by
/// the explicit `points`; each is a set of config overrides on `base`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub base: toml::Table,
    /// Used when no `fer` entry matches the point's data rate; the shipped
    /// tables are the last resort.
    pub fer_table: Option<PathBuf>,
    pub fer: Vec<FerEntry>,
    pub seed: u64,
    pub sim: SimParams,
    pub tolerances: Tolerances,
    pub grid: BTreeMap<String, Vec<toml::Value>>,
    pub points: Vec<toml::Table>,
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))
    }

    /// Loads a sweep file; relative FER paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec = Self::from_toml_str(&table::read_file(path)?)
            .map_err(|e| Error::Toml(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = spec.fer_table.as_mut() {
            *p = dir.join(&*p);
        }
        for e in &mut spec.fer {
            e.path = dir.join(&e.path);
        }
        Ok(spec)
    }

    /// Override sets, one per sweep point.
    pub fn expand(&self) -> Vec<toml::Table> {
        let mut out = Vec::new();
        if !self.grid.is_empty() {
            let mut acc = vec![toml::Table::new()];
            for (k, values) in &self.grid {
                let mut next = Vec::with_capacity(acc.len() * values.len());
                for t in &acc {
                    for v in values {
                        let mut t = t.clone();
                        t.insert(k.clone(), v.clone());
                        next.push(t);
                    }
                }
                acc = next;
            }
            out.extend(acc);
        }
        out.extend(self.points.iter().cloned());
        out
    }

    fn fer_for(&self, data_rate: f64) -> Option<&Path> {
        self.fer
            .iter()
            .find(|e| e.data_rate == data_rate)
            .map(|e| e.path.as_path())
            .or(self.fer_table.as_deref())
    }

    /// FER table for a point: an explicit file, else the shipped table.
    fn load_fer(&self, data_rate: f64) -> Result<FerTable> {
        match self.fer_for(data_rate) {
            Some(p) => FerTable::load(p),
            None => FerTable::builtin(data_rate)
                .ok_or_else(|| Error::Config(format!("no FER table for data rate {data_rate}"))),
        }
    }
}

pub struct SweepPoint {
    pub overrides: toml::Table,
    pub config: ScenarioConfig,
    pub curve: LinkCurve,
    pub sim: SimReport,
    pub report: ComparisonReport,
}

#[derive(Default)]
pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
}

impl SweepOutcome {
    pub fn cbr_samples(&self) -> Vec<CbrSample> {
        self.points
            .iter()
            .map(|p| CbrSample { cbr_u: p.curve.cbr_u, cbr_measured: p.sim.cbr_measured })
            .collect()
    }
}

fn override_strings(t: &toml::Table) -> BTreeMap<String, String> {
    t.iter().map(|(k, v)| (k.clone(), v.to_string())).collect()
}

/// Runs the analytic model and the simulator at every sweep point and
/// compares them.
pub fn sweep_runner(spec: &SweepSpec) -> Result<SweepOutcome> {
    let base = ScenarioConfig::default().with_overrides(&spec.base)?;
    let sets = spec.expand();
    let mut jobs = Vec::with_capacity(sets.len());
    for o in sets {
        let cfg = base.with_overrides(&o)?;
        let fer = spec.load_fer(cfg.data_rate)?;
        jobs.push((o, cfg, fer));
    }
    let points = jobs
        .into_par_iter()
        .map(|(overrides, config, fer)| {
            let sc = Scenario::new(config.clone(), fer)?;
            let sim = run_sim(&sc, &spec.sim, spec.seed)?;
            let curve = sweep(&sc, &curve_distances(&sim))?;
            let mut report = compare(&curve, &sim, &spec.tolerances)?;
            report.overrides = override_strings(&overrides);
            Ok(SweepPoint { overrides, config, curve, sim, report })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepOutcome { points })
}

/// The regular output grid merged with every occupied bin's mean distance.
pub fn curve_distances(sim: &SimReport) -> Vec<f64> {
    let mut d = default_distances();
    d.extend(sim.bins.iter().filter(|b| b.attempts > 0).map(|b| b.mean_distance_m));
    d.sort_by(f64::total_cmp);
    d.dedup();
    d
}
