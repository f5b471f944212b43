//! `v2v`: analytic link curves, simulation, comparison and sweeps.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use v2v_core::eval::{cbr_samples_from_csv, cbr_samples_to_csv, fit_cbr_samples};
use v2v_core::pdr::default_distances;
use v2v_core::sim::ShadowingMode;
use v2v_core::{
    compare, estimate_cbr, run_sim, sweep_runner, sweep_with, FerTable, Interferers, LinkCurve, Scenario,
    ScenarioConfig, SimParams, SimReport, SweepSpec, Tolerances,
};

#[derive(Parser)]
#[command(name = "v2v", version, about = "802.11p broadcast link models and CSMA/CA simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Analytic PDR and error curves over distance.
    Analytic(AnalyticArgs),
    /// Monte Carlo simulation of the highway lattice.
    Simulate(SimulateArgs),
    /// Score an analytic curve against a simulation.
    Compare(CompareArgs),
    /// Run analytic model, simulator and comparison over a parameter grid.
    Sweep(SweepArgs),
    /// Channel busy ratio estimate, or refit the compression polynomial.
    Cbr(CbrArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario TOML; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// FER table CSV (ebn0_db,fer); defaults to the shipped table for the data rate.
    #[arg(long)]
    fer_table: Option<PathBuf>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        let cfg = match &self.config {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::default(),
        };
        let fer = match &self.fer_table {
            Some(p) => FerTable::load(p)?,
            None => FerTable::builtin(cfg.data_rate).with_context(|| {
                format!("no shipped FER table for {} bit/s, pass --fer-table", cfg.data_rate)
            })?,
        };
        Ok(Scenario::new(cfg, fer)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InterfererArg {
    Lattice,
    None,
}

#[derive(Args)]
struct AnalyticArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_enum, default_value = "lattice")]
    interferers: InterfererArg,
    /// Distance step, m.
    #[arg(long)]
    step_m: Option<f64>,
    /// Largest distance, m.
    #[arg(long)]
    max_distance_m: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShadowingArg {
    PerLink,
    PerPacket,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// TOML with further simulator settings; flags below take precedence.
    #[arg(long)]
    sim_params: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    duration_s: Option<f64>,
    #[arg(long)]
    replications: Option<u32>,
    #[arg(long)]
    bin_m: Option<f64>,
    #[arg(long, value_enum)]
    shadowing: Option<ShadowingArg>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    curve: PathBuf,
    #[arg(long)]
    sim: PathBuf,
    /// Tolerance TOML; defaults apply when omitted.
    #[arg(long)]
    tolerances: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CbrArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// CSV with columns cbr_u, cbr_measured; prints fitted coefficients.
    #[arg(long)]
    fit: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Analytic(a) => analytic(a),
        Cmd::Simulate(a) => simulate(a),
        Cmd::Compare(a) => compare_cmd(a),
        Cmd::Sweep(a) => sweep_cmd(a),
        Cmd::Cbr(a) => cbr(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn analytic(a: AnalyticArgs) -> Result<ExitCode> {
    let sc = a.scenario.load()?;
    let distances = match (a.step_m, a.max_distance_m) {
        (None, None) => default_distances(),
        (step, max) => {
            let step = step.unwrap_or(10.0);
            let max = max.unwrap_or(1000.0);
            if step.is_nan() || step <= 0.0 || max.is_nan() || max < 0.0 {
                bail!("--step-m must be positive and --max-distance-m non-negative");
            }
            let n = (max / step + 1e-9).floor() as usize;
            (0..=n).map(|i| i as f64 * step).collect()
        }
    };
    let interferers = match a.interferers {
        InterfererArg::Lattice => Interferers::Lattice,
        InterfererArg::None => Interferers::None,
    };
    let curve = sweep_with(&sc, &distances, interferers)?;
    curve.write_csv(&a.out)?;
    println!(
        "{} points, CBR_u {:.4}, CBR {:.4} -> {}",
        curve.points.len(),
        curve.cbr_u,
        curve.cbr,
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn simulate(a: SimulateArgs) -> Result<ExitCode> {
    let sc = a.scenario.load()?;
    let mut params = match &a.sim_params {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| p.display().to_string())?;
            toml::from_str(&text).with_context(|| p.display().to_string())?
        }
        None => SimParams::default(),
    };
    if let Some(v) = a.duration_s {
        params.duration_s = v;
    }
    if let Some(v) = a.replications {
        params.replications = v;
    }
    if let Some(v) = a.bin_m {
        params.bin_m = v;
    }
    if let Some(s) = a.shadowing {
        params.shadowing = match s {
            ShadowingArg::PerLink => ShadowingMode::PerLink,
            ShadowingArg::PerPacket => ShadowingMode::PerPacket,
        };
    }
    let report = run_sim(&sc, &params, a.seed)?;
    report.write_csv(&a.out)?;
    let t = report.total();
    println!(
        "{} transmissions, {} attempts, PDR {:.4}, CBR {:.4} -> {}",
        report.transmissions,
        t.attempts,
        t.pdr(),
        report.cbr_measured,
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn compare_cmd(a: CompareArgs) -> Result<ExitCode> {
    let curve = LinkCurve::read_csv(&a.curve)?;
    let sim = SimReport::read_csv(&a.sim)?;
    let tol = match &a.tolerances {
        Some(p) => Tolerances::load(p)?,
        None => Tolerances::default(),
    };
    let report = compare(&curve, &sim, &tol)?;
    fs::write(&a.out, report.to_json()?).with_context(|| a.out.display().to_string())?;
    println!(
        "MAD pdr {:.3}% sen {:.3}% rxb {:.3}% pro {:.3}% col {:.3}%  CBR {:.4} vs {:.4}  {}",
        report.mad_pdr_pct,
        report.mad_dsen_pct,
        report.mad_drxb_pct,
        report.mad_dpro_pct,
        report.mad_dcol_pct,
        report.cbr_analytic,
        report.cbr_measured,
        if report.pass { "PASS" } else { "FAIL" }
    );
    for f in &report.failures {
        println!("  {f}");
    }
    Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn sweep_cmd(a: SweepArgs) -> Result<ExitCode> {
    let spec = SweepSpec::load(&a.spec)?;
    let out = sweep_runner(&spec)?;
    fs::create_dir_all(&a.out_dir).with_context(|| a.out_dir.display().to_string())?;
    let mut reports = Vec::new();
    for (i, p) in out.points.iter().enumerate() {
        let dir = a.out_dir.join(format!("point_{i:03}"));
        fs::create_dir_all(&dir).with_context(|| dir.display().to_string())?;
        fs::write(dir.join("config.toml"), p.config.to_toml_string())?;
        p.curve.write_csv(&dir.join("curve.csv"))?;
        p.sim.write_csv(&dir.join("sim.csv"))?;
        fs::write(dir.join("report.json"), p.report.to_json()?)?;
        println!(
            "{}  {}  pdr MAD {:.3}%  CBR {:.4} vs {:.4}  {}",
            dir.display(),
            describe(&p.report.overrides),
            p.report.mad_pdr_pct,
            p.report.cbr_analytic,
            p.report.cbr_measured,
            if p.report.pass { "PASS" } else { "FAIL" }
        );
        reports.push(&p.report);
    }
    write(&a.out_dir.join("reports.json"), &serde_json::to_string_pretty(&reports)?)?;
    write(&a.out_dir.join("cbr_samples.csv"), &cbr_samples_to_csv(&out.cbr_samples())?)?;
    println!("{} points -> {}", out.points.len(), a.out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn describe(o: &std::collections::BTreeMap<String, String>) -> String {
    o.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| path.display().to_string())
}

fn cbr(a: CbrArgs) -> Result<ExitCode> {
    if let Some(path) = &a.fit {
        let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
        let samples = cbr_samples_from_csv(&text, &path.display().to_string())?;
        let c = fit_cbr_samples(&samples)?;
        println!("cbr_p1 = {}\ncbr_p2 = {}\ncbr_p3 = {}", c.p1, c.p2, c.p3);
        return Ok(ExitCode::SUCCESS);
    }
    let sc = a.scenario.load()?;
    let e = estimate_cbr(&sc);
    println!("cbr_u = {}\ncbr = {}", e.cbr_u, e.cbr);
    Ok(ExitCode::SUCCESS)
}
