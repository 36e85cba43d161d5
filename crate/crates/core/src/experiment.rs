//! Experiment pipelines: build the weight, run the wave and heat solvers,
//! evaluate checks, fit rates and persist the results.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Command, ExperimentConfig};
use crate::energy::{monotonicity_check_e1, write_energy_csv, EnergyContext, EnergyRecord, EnergyTracker};
use crate::error::{Error, Result};
use crate::grid::{fmt_sci, weighted_l2_norm, write_columns, DampingProfile, Field, InitialData, RadialGrid, WeightKind};
use crate::heat::{duhamel_reconstruct, duhamel_sample_times, evolve_heat, evolve_heat_with, heat_initial_from_wave, HeatRunConfig, Semigroup};
use crate::plot::{emit_plots, PlotSpec};
use crate::rates::{fit_decay_slope, rate_table, verdict, DecayFit, Direction, Verdict};
use crate::transform::{image_grid, isometry_defect, psi0_residual, TransformParams};
use crate::wave::{solve_wave, support_leak, WaveRunConfig};
use crate::weight::{assemble_a_eps, h_constant};

/// Outcome of one non-rate check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    /// Worst observed value.
    pub value: f64,
    /// Bound `value` is compared against.
    pub limit: f64,
    pub detail: String,
}

/// Contents of `verdict.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub command: String,
    /// `complete`, or `aborted` when a module error stopped the run.
    pub status: String,
    pub error: Option<String>,
    pub rates: Vec<Verdict>,
    pub fits: BTreeMap<String, DecayFit>,
    pub checks: Vec<CheckResult>,
    pub all_pass: bool,
}

impl VerdictReport {
    fn new(command: Command) -> Self {
        Self {
            command: command.as_str().to_string(),
            status: "complete".into(),
            error: None,
            rates: Vec::new(),
            fits: BTreeMap::new(),
            checks: Vec::new(),
            all_pass: true,
        }
    }

    fn check(&mut self, name: &str, pass: bool, value: f64, limit: f64, detail: impl Into<String>) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            pass,
            value,
            limit,
            detail: detail.into(),
        });
    }

    fn finalize(&mut self) {
        self.all_pass = self.status == "complete"
            && self.rates.iter().all(|v| v.pass)
            && self.checks.iter().all(|c| c.pass);
    }

    pub fn rate(&self, quantity: &str) -> Option<&Verdict> {
        self.rates.iter().find(|v| v.quantity == quantity)
    }

    pub fn find_check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub dim: usize,
    pub r0: f64,
    pub r_max: f64,
    pub n: usize,
    pub dr: f64,
    pub wave_dt: Option<f64>,
    pub heat_dt: Option<f64>,
}

/// Everything a run wrote; serialized to `artifact.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub command: String,
    pub config: ExperimentConfig,
    pub output_dir: PathBuf,
    pub energy_csv: Option<PathBuf>,
    pub series_csvs: Vec<PathBuf>,
    pub field_csvs: Vec<PathBuf>,
    pub weight_csv: Option<PathBuf>,
    pub verdict_json: PathBuf,
    pub svgs: Vec<PathBuf>,
    pub grid: GridMeta,
    pub wall_clock_s: f64,
    pub all_pass: bool,
}

impl RunArtifact {
    /// Every CSV the run wrote, in a fixed order.
    pub fn csvs(&self) -> Vec<&PathBuf> {
        self.energy_csv
            .iter()
            .chain(&self.series_csvs)
            .chain(&self.field_csvs)
            .chain(&self.weight_csv)
            .collect()
    }
}

struct Setup {
    grid: RadialGrid,
    p: DampingProfile,
    data: InitialData,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let grid = cfg.grid()?;
    Ok(Setup {
        grid,
        p: cfg.damping()?,
        data: cfg.initial_data(&grid)?,
    })
}

/// Runs `command` for `cfg`, writing into `out_dir`. On a module error the
/// verdict is still written, flagged `aborted`, and the error returned.
pub fn run_experiment(cfg: &ExperimentConfig, command: Command, out_dir: &Path) -> Result<RunArtifact> {
    cfg.validate()?;
    cfg.validate_for(command)?;
    std::fs::create_dir_all(out_dir)?;
    let started = Instant::now();
    let grid = cfg.grid()?;
    let mut art = RunArtifact {
        command: command.as_str().to_string(),
        config: cfg.clone(),
        output_dir: out_dir.to_path_buf(),
        energy_csv: None,
        series_csvs: Vec::new(),
        field_csvs: Vec::new(),
        weight_csv: None,
        verdict_json: out_dir.join("verdict.json"),
        svgs: Vec::new(),
        grid: GridMeta {
            dim: grid.dim(),
            r0: grid.r0(),
            r_max: grid.r_max(),
            n: grid.len(),
            dr: grid.dr(),
            wave_dt: None,
            heat_dt: None,
        },
        wall_clock_s: 0.0,
        all_pass: false,
    };
    let mut report = VerdictReport::new(command);
    info!("{} run into {}", command.as_str(), out_dir.display());
    let outcome = match command {
        Command::Weight => weight_pipeline(cfg, out_dir, &mut report, &mut art),
        Command::Wave => wave_pipeline(cfg, out_dir, false, &mut report, &mut art),
        Command::Compare => wave_pipeline(cfg, out_dir, true, &mut report, &mut art),
        Command::Heat => heat_pipeline(cfg, out_dir, &mut report, &mut art),
        Command::TransformCheck => transform_pipeline(cfg, out_dir, &mut report, &mut art),
        Command::Duhamel => duhamel_pipeline(cfg, out_dir, &mut report, &mut art),
    };
    if let Err(e) = &outcome {
        report.status = "aborted".into();
        report.error = Some(e.to_string());
    }
    report.finalize();
    std::fs::write(&art.verdict_json, serde_json::to_string_pretty(&report)? + "\n")?;
    art.wall_clock_s = started.elapsed().as_secs_f64();
    art.all_pass = report.all_pass;
    std::fs::write(out_dir.join("artifact.json"), serde_json::to_string_pretty(&art)? + "\n")?;
    outcome?;
    info!(
        "{} finished in {:.2}s, all checks {}",
        command.as_str(),
        art.wall_clock_s,
        if art.all_pass { "pass" } else { "NOT passing" }
    );
    Ok(art)
}

/// Reads back `verdict.json` of a finished run.
pub fn read_verdict(art: &RunArtifact) -> Result<VerdictReport> {
    Ok(serde_json::from_str(&std::fs::read_to_string(&art.verdict_json)?)?)
}

fn weight_checks(cfg: &ExperimentConfig, grid: &RadialGrid, p: &DampingProfile, report: &mut VerdictReport) -> Result<crate::weight::AuxiliaryWeight> {
    let w = assemble_a_eps(p, grid, cfg.eps)?;
    if cfg.wants("weight") {
        let r = &w.report;
        let h = h_constant(grid.dim(), cfg.alpha);
        let grad_limit = h + cfg.eps + 0.02;
        report.check(
            "weight_elliptic",
            r.ellip_pass,
            (r.ellip_min - 1.0).abs().max((r.ellip_max - 1.0).abs()),
            cfg.eps + r.ellip_tol,
            format!("Delta A / a in [{}, {}]", r.ellip_min, r.ellip_max),
        );
        report.check(
            "weight_gradient",
            r.grad_ratio_sup <= grad_limit && r.min_value > 0.0,
            r.grad_ratio_sup,
            grad_limit,
            "sup |A'|^2/(aA)",
        );
        let tail_dev = ((r.tail_ratio_min - h) / h).abs().max(((r.tail_ratio_max - h) / h).abs());
        report.check(
            "weight_tail",
            tail_dev <= 0.05,
            tail_dev,
            0.05,
            format!("|A'|^2/(aA) in [{}, {}] over the last decade, h = {h}", r.tail_ratio_min, r.tail_ratio_max),
        );
    }
    Ok(w)
}

fn weight_pipeline(cfg: &ExperimentConfig, out: &Path, report: &mut VerdictReport, art: &mut RunArtifact) -> Result<()> {
    let s = setup(cfg)?;
    let w = weight_checks(cfg, &s.grid, &s.p, report)?;
    let path = out.join("weight.csv");
    w.write_csv(&path, &s.p)?;
    art.weight_csv = Some(path);
    std::fs::write(out.join("weight_report.json"), serde_json::to_string_pretty(&w.report)? + "\n")?;
    Ok(())
}

/// Rate verdict, or a vacuous pass for an identically zero series.
fn rate_check(
    report: &mut VerdictReport,
    quantity: &str,
    series: &[(f64, f64)],
    window: (f64, f64),
    target: f64,
    tol: f64,
    direction: Direction,
) -> Result<Option<DecayFit>> {
    if series.iter().all(|(_, v)| *v == 0.0) {
        report.check(quantity, true, 0.0, 0.0, "zero series, vacuous");
        return Ok(None);
    }
    let fit = fit_decay_slope(series, window)?;
    report.rates.push(verdict(quantity, &fit, target, tol, direction));
    report.fits.insert(quantity.to_string(), fit);
    Ok(Some(fit))
}

/// Wave step shrunk so that it divides `unit`, unless given explicitly.
fn aligned_dt(requested: f64, unit: f64) -> f64 {
    unit / (unit / requested - 1e-9).ceil()
}

fn field_name(prefix: &str, step: usize) -> String {
    format!("{prefix}_k{step:08}.csv")
}

fn inequality_checks(cfg: &ExperimentConfig, records: &[EnergyRecord], report: &mut VerdictReport) {
    let tol = cfg.tolerances.inequality_rel;
    if cfg.wants("hardy") {
        let worst = records
            .iter()
            .map(|r| r.hardy_margin / r.parts.e_dx.abs().max(f64::MIN_POSITIVE))
            .fold(f64::INFINITY, f64::min);
        let worst = if worst.is_finite() { worst } else { 0.0 };
        report.check("hardy", worst >= -tol, worst, -tol, "min relative Hardy margin");
    }
    if cfg.wants("monotonicity") {
        let worst = monotonicity_check_e1(records).unwrap_or(0.0);
        report.check("monotonicity", worst <= tol, worst, tol, "max relative dE1/dt + E_a(u_t)");
    }
    if cfg.wants("appfps") {
        let failing = records.iter().filter(|r| !r.appfps.all_pass()).count();
        let worst = records
            .iter()
            .map(|r| r.appfps.e12_margin.min(r.appfps.a_over_a_margin).min(r.appfps.e21_margin))
            .fold(f64::INFINITY, f64::min);
        report.check(
            "appfps",
            failing == 0,
            if worst.is_finite() { worst } else { 0.0 },
            0.0,
            format!("{failing} of {} records violate a bound", records.len()),
        );
    }
}

struct WaveCore {
    dt: f64,
    stride: usize,
    record_steps: Vec<usize>,
    snapshots: Vec<crate::wave::WaveSnapshot>,
    /// Worst support leak and the time it occurred.
    leak: (f64, f64),
    kept: BTreeMap<usize, Vec<f64>>,
    records: Vec<EnergyRecord>,
}

/// Wave run with energy records every `run.record_every`. With `keep`, the
/// record steps are multiples of the heat stride and `u` is kept there.
fn run_wave(cfg: &ExperimentConfig, s: &Setup, ctx: &EnergyContext, keep: bool) -> Result<WaveCore> {
    let (grid, p) = (s.grid, s.p);
    let r0_support = cfg.support_radius();
    let t_final = cfg.run.t_final;
    let dt = cfg.wave_dt(&grid);
    let wave_cfg = WaveRunConfig {
        dt,
        t_final,
        sample_times: if cfg.run.sample_times.is_empty() {
            vec![0.0, 0.5 * t_final, t_final]
        } else {
            cfg.run.sample_times.clone()
        },
    };
    let steps = wave_cfg.steps();
    let stride = if keep {
        ((cfg.run.heat_dt / dt).round() as usize).max(1)
    } else {
        1
    };
    let n_records = (t_final / cfg.run.record_every + 1e-9).floor() as usize;
    let mut record_steps = vec![0usize];
    for j in 1..=n_records {
        let k = (j as f64 * cfg.run.record_every / (dt * stride as f64)).round() as usize * stride;
        record_steps.push(k.min(steps / stride * stride));
    }
    record_steps.dedup();

    let mut tracker = EnergyTracker::new(ctx, record_steps.clone(), cfg.tolerances.inequality_rel);
    let mut leak = (0.0f64, 0.0f64);
    let mut kept: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    info!("wave: {steps} steps of dt = {dt:e} on {} nodes", grid.len());
    let snapshots = solve_wave(&wave_cfg, &s.data, &p, |v| {
        tracker.observe(v)?;
        let l = support_leak(v.u_now, v.grid, r0_support, v.t);
        if l > leak.0 {
            leak = (l, v.t);
        }
        if keep && record_steps.binary_search(&v.step).is_ok() {
            kept.insert(v.step, v.u_now.to_vec());
        }
        Ok(())
    })?;
    Ok(WaveCore {
        dt,
        stride,
        record_steps,
        snapshots,
        leak,
        kept,
        records: tracker.finish(),
    })
}

/// In-memory wave run: energy records and the worst support leak.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveSummary {
    pub dt: f64,
    pub records: Vec<EnergyRecord>,
    pub max_leak: f64,
    pub leak_t: f64,
}

pub fn simulate_wave(cfg: &ExperimentConfig) -> Result<WaveSummary> {
    cfg.validate()?;
    let s = setup(cfg)?;
    let w = assemble_a_eps(&s.p, &s.grid, cfg.eps)?;
    let ctx = EnergyContext::new(&w, &s.p, cfg.support_radius());
    let core = run_wave(cfg, &s, &ctx, false)?;
    Ok(WaveSummary {
        dt: core.dt,
        records: core.records,
        max_leak: core.leak.0,
        leak_t: core.leak.1,
    })
}

fn wave_pipeline(
    cfg: &ExperimentConfig,
    out: &Path,
    with_heat: bool,
    report: &mut VerdictReport,
    art: &mut RunArtifact,
) -> Result<()> {
    let s = setup(cfg)?;
    let (grid, p) = (s.grid, s.p);
    let w = weight_checks(cfg, &grid, &p, report)?;
    let weight_csv = out.join("weight.csv");
    w.write_csv(&weight_csv, &p)?;
    art.weight_csv = Some(weight_csv);

    let r0_support = cfg.support_radius();
    let ctx = EnergyContext::new(&w, &p, r0_support);
    let core = run_wave(cfg, &s, &ctx, with_heat)?;
    let WaveCore {
        dt,
        stride,
        record_steps,
        snapshots,
        leak,
        mut kept,
        mut records,
    } = core;
    let t_final = cfg.run.t_final;
    art.grid.wave_dt = Some(dt);
    if with_heat {
        art.grid.heat_dt = Some(stride as f64 * dt);
    }

    for snap in &snapshots {
        let path = out.join(field_name("wave", snap.step));
        write_columns(&path, &["r", "u", "u_t", "u_tt"], &[&snap.u, &snap.u_t, &snap.u_tt])?;
        art.field_csvs.push(path);
    }

    let mut heat_series = Vec::new();
    if with_heat {
        let v0 = heat_initial_from_wave(&s.data, &p)?;
        let heat_dt = stride as f64 * dt;
        let last = *record_steps.last().expect("step 0 is recorded");
        let traj = evolve_heat(
            &v0,
            &p,
            &HeatRunConfig {
                dt: heat_dt,
                t_final: last as f64 * dt,
                sample_times: record_steps.iter().map(|k| *k as f64 * dt).collect(),
            },
        )?;
        if traj.snapshots.len() != records.len() {
            return Err(Error::InsufficientSnapshots { t: last as f64 * dt });
        }
        for ((rec, hs), k) in records.iter_mut().zip(&traj.snapshots).zip(&record_steps) {
            let u = Field::new(grid, kept.remove(k).ok_or(Error::InsufficientSnapshots { t: rec.t })?)?;
            let diff = u.zip_map(&hs.v, |a, b| a - b)?;
            rec.l2a_diff = Some(weighted_l2_norm(&diff, &p, WeightKind::Dmu));
            heat_series.push((rec.t, weighted_l2_norm(&hs.v, &p, WeightKind::Dmu)));
        }
        report.check(
            "heat_tail",
            !traj.tail_warning,
            traj.max_tail_ratio,
            crate::heat::TAIL_THRESHOLD,
            "heat mass at the outer boundary",
        );
        let path = out.join("heat.csv");
        write_series(&path, &["t", "v_l2_dmu"], &heat_series)?;
        art.series_csvs.push(path);
    }

    let energy_csv = out.join("energy.csv");
    write_energy_csv(&energy_csv, &records)?;
    art.energy_csv = Some(energy_csv.clone());

    let table = rate_table(grid.dim(), cfg.alpha, cfg.eps)?;
    let window = cfg.fit_window(t_final);
    let tol = cfg.tolerances;
    let l2a: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.l2a_u)).collect();
    let mut specs = Vec::new();
    let mut cor2_fit = None;
    if cfg.wants("cor2") {
        cor2_fit = rate_check(report, "l2a_u", &l2a, window, table.cor2_exp, tol.cor2, Direction::TwoSided)?;
        specs.push(("l2a_u", table.cor2_exp, cor2_fit));
    }
    if cfg.wants("energy_ea") {
        let ea: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.parts.e_a)).collect();
        let fit = rate_check(report, "E_a", &ea, window, table.propmain_ea_exp, tol.energy_ea, Direction::AtLeastAsFast)?;
        specs.push(("E_a", table.propmain_ea_exp, fit));
    }
    if cfg.wants("energy_e1") {
        let e1: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.e1())).collect();
        let fit = rate_check(report, "E1", &e1, window, table.propmain_e1_exp, tol.energy_e1, Direction::AtLeastAsFast)?;
        specs.push(("E1", table.propmain_e1_exp, fit));
    }
    if with_heat && cfg.wants("thm1") {
        let diff: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.l2a_diff.unwrap_or(0.0))).collect();
        let u_fit = match cor2_fit {
            Some(f) => Some(f),
            None if l2a.iter().any(|(_, v)| *v != 0.0) => Some(fit_decay_slope(&l2a, window)?),
            None => None,
        };
        let nonzero = diff.iter().any(|(_, v)| *v != 0.0);
        if let (true, Some(u)) = (nonzero, u_fit) {
            let d = fit_decay_slope(&diff, window)?;
            report.fits.insert("l2a_diff".into(), d);
            let gap = DecayFit {
                slope: d.slope - u.slope,
                stderr: d.stderr.hypot(u.stderr),
                intercept: d.intercept - u.intercept,
                window,
                n_points: d.n_points,
                residual_rms: d.residual_rms.hypot(u.residual_rms),
            };
            let target = table.thm1_exp - table.cor2_exp;
            report.rates.push(verdict(
                "l2a_diff_gap",
                &gap,
                target,
                target - tol.thm1_gap,
                Direction::AtLeastAsFast,
            ));
            specs.push(("l2a_diff", table.thm1_exp, Some(d)));
        } else {
            report.check("l2a_diff_gap", true, 0.0, 0.0, "zero series, vacuous");
        }
    }
    inequality_checks(cfg, &records, report);
    if cfg.wants("support") {
        report.check(
            "support",
            leak.0 < tol.support,
            leak.0,
            tol.support,
            format!("max |u| beyond R0 + t + 2 dr, worst at t = {}", leak.1),
        );
    }

    let specs: Vec<PlotSpec> = specs
        .into_iter()
        .map(|(column, target, fit)| PlotSpec {
            column: column.to_string(),
            target,
            fitted_slope: fit.map(|f| f.slope),
            anchor_t: window.0,
        })
        .filter(|s| records.iter().any(|r| r.t > 0.0 && column_value(r, &s.column) > 0.0))
        .collect();
    art.svgs = emit_plots(&energy_csv, out, &specs)?;
    Ok(())
}

fn column_value(r: &EnergyRecord, column: &str) -> f64 {
    match column {
        "l2a_u" => r.l2a_u,
        "l2a_diff" => r.l2a_diff.unwrap_or(0.0),
        "E_a" => r.parts.e_a,
        "E1" => r.e1(),
        _ => 0.0,
    }
}

fn write_series(path: &Path, headers: &[&str], rows: &[(f64, f64)]) -> Result<()> {
    let mut out = String::with_capacity(40 * (rows.len() + 1));
    out.push_str(&headers.join(","));
    out.push('\n');
    for (a, b) in rows {
        out.push_str(&fmt_sci(*a));
        out.push(',');
        out.push_str(&fmt_sci(*b));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn heat_pipeline(cfg: &ExperimentConfig, out: &Path, report: &mut VerdictReport, art: &mut RunArtifact) -> Result<()> {
    let s = setup(cfg)?;
    let (grid, p) = (s.grid, s.p);
    let horizon = cfg.heat_horizon();
    let every = cfg.run.record_every;
    let dt = aligned_dt(cfg.run.heat_dt, every);
    let stride = (every / dt).round() as usize;
    art.grid.heat_dt = Some(dt);

    let v0 = heat_initial_from_wave(&s.data, &p)?;
    let weights: Vec<f64> = grid
        .quadrature_weights()
        .iter()
        .zip(grid.nodes())
        .map(|(q, r)| q * p.eval(r))
        .collect();
    let mut series = Vec::new();
    let mut step = 0usize;
    let sample_times = if cfg.run.sample_times.is_empty() {
        vec![0.0, 0.5 * horizon, horizon]
    } else {
        cfg.run.sample_times.iter().map(|t| t * horizon / cfg.run.t_final).collect()
    };
    info!("heat: horizon {horizon}, dt = {dt:e} on {} nodes", grid.len());
    let traj = evolve_heat_with(
        &v0,
        &p,
        &HeatRunConfig {
            dt,
            t_final: horizon,
            sample_times,
        },
        |t, v| {
            if step.is_multiple_of(stride) {
                let norm: f64 = weights.iter().zip(v).map(|(w, x)| w * x * x).sum::<f64>().sqrt();
                series.push((t, norm));
            }
            step += 1;
            Ok(())
        },
    )?;
    for hs in &traj.snapshots {
        let k = (hs.t / dt).round() as usize;
        let path = out.join(field_name("heat", k));
        write_columns(&path, &["r", "v"], &[&hs.v])?;
        art.field_csvs.push(path);
    }
    let path = out.join("heat.csv");
    write_series(&path, &["t", "v_l2_dmu"], &series)?;
    art.series_csvs.push(path.clone());
    report.check(
        "heat_tail",
        !traj.tail_warning,
        traj.max_tail_ratio,
        crate::heat::TAIL_THRESHOLD,
        "heat mass at the outer boundary",
    );

    let window = cfg.fit_window(horizon);
    if cfg.wants("heat_decay") {
        let table = rate_table(grid.dim(), cfg.alpha, cfg.eps)?;
        let target = table.heat_l1_exp.unwrap_or(table.cor2_exp);
        let fit = rate_check(report, "v_l2_dmu", &series, window, target, cfg.tolerances.heat_decay, Direction::TwoSided)?;
        if series.iter().any(|(t, v)| *t > 0.0 && *v > 0.0) {
            art.svgs = emit_plots(
                &path,
                out,
                &[PlotSpec {
                    column: "v_l2_dmu".into(),
                    target,
                    fitted_slope: fit.map(|f| f.slope),
                    anchor_t: window.0,
                }],
            )?;
        }
    }
    Ok(())
}

fn duhamel_pipeline(cfg: &ExperimentConfig, out: &Path, report: &mut VerdictReport, art: &mut RunArtifact) -> Result<()> {
    let s = setup(cfg)?;
    let (grid, p) = (s.grid, s.p);
    let du = cfg.duhamel;
    let t = du.t.unwrap_or(cfg.run.t_final);
    let half = 0.5 * du.ds;
    let dt = aligned_dt(cfg.wave_dt(&grid), half);
    let heat_dt = aligned_dt(du.heat_dt, half);
    art.grid.wave_dt = Some(dt);
    art.grid.heat_dt = Some(heat_dt);

    let mut times = duhamel_sample_times(t, du.ds).map_err(|e| match e {
        Error::InvalidParameter { reason, .. } => Error::Validation {
            path: "duhamel.ds".into(),
            message: reason,
        },
        other => other,
    })?;
    times.push(t);
    let snapshots = solve_wave(
        &WaveRunConfig {
            dt,
            t_final: t,
            sample_times: times,
        },
        &s.data,
        &p,
        |_| Ok(()),
    )?;
    let sg = Semigroup::new(grid, &p, heat_dt, false)?;
    let rec = duhamel_reconstruct(&snapshots, &s.data, &p, &sg, t, du.ds)?;
    let u = &snapshots.last().expect("t is sampled").u;
    let diff = rec.zip_map(u, |a, b| a - b)?;
    let norm_u = weighted_l2_norm(u, &p, WeightKind::Dmu);
    let mismatch = if norm_u > 0.0 {
        weighted_l2_norm(&diff, &p, WeightKind::Dmu) / norm_u
    } else {
        weighted_l2_norm(&diff, &p, WeightKind::Dmu)
    };

    let rec0 = duhamel_reconstruct(&snapshots, &s.data, &p, &sg, 0.0, du.ds)?;
    let norm0 = weighted_l2_norm(&s.data.u0, &p, WeightKind::Dmu);
    let d0 = weighted_l2_norm(&rec0.zip_map(&s.data.u0, |a, b| a - b)?, &p, WeightKind::Dmu);
    let exact0 = if norm0 > 0.0 { d0 / norm0 } else { d0 };

    if cfg.wants("duhamel") {
        report.check(
            "duhamel",
            mismatch < cfg.tolerances.duhamel,
            mismatch,
            cfg.tolerances.duhamel,
            format!("relative L2(dmu) mismatch at t = {t}"),
        );
        report.check("duhamel_t0", exact0 < 1e-12, exact0, 1e-12, "identity at t = 0");
    }
    let path = out.join("duhamel.csv");
    write_columns(&path, &["r", "u", "reconstructed"], &[u, &rec])?;
    art.field_csvs.push(path);
    Ok(())
}

fn transform_pipeline(cfg: &ExperimentConfig, out: &Path, report: &mut VerdictReport, art: &mut RunArtifact) -> Result<()> {
    let tc = &cfg.transform;
    let p = cfg.damping()?;
    let tol = cfg.tolerances;
    let tp = TransformParams::new(cfg.alpha, cfg.dim)?;
    let iso_grid = RadialGrid::new(cfg.grid.r0, cfg.grid.r_max, tc.isometry_n, cfg.dim)?;
    let gap = isometry_defect(&p, &iso_grid, &tp)?;
    if cfg.wants("isometry") {
        report.check("isometry", gap < tol.isometry, gap, tol.isometry, format!("n = {}", tc.isometry_n));
    }

    let tp3 = TransformParams::new(cfg.alpha, tc.psi0_dim)?;
    let mut rows = Vec::new();
    for &n in &tc.psi0_n {
        let base = RadialGrid::new(1.0, crate::transform::psi_inverse(tc.psi0_r_max, cfg.alpha)?, n, tc.psi0_dim)?;
        let image = image_grid(&base, cfg.alpha)?;
        rows.push((n as f64, psi0_residual(&image, &tp3, &p)?));
    }
    if cfg.wants("psi0") {
        let (lo, hi) = tol.psi0_ratio;
        let ratios: Vec<f64> = rows.windows(2).map(|w| w[0].1 / w[1].1).collect();
        let worst = ratios
            .iter()
            .copied()
            .min_by(|a, b| (a - 0.5 * (lo + hi)).abs().total_cmp(&(b - 0.5 * (lo + hi)).abs()).reverse())
            .unwrap_or(f64::NAN);
        report.check(
            "psi0",
            !ratios.is_empty() && ratios.iter().all(|r| (lo..=hi).contains(r)),
            worst,
            hi,
            format!("residual ratios per doubling {ratios:?}, accepted [{lo}, {hi}]"),
        );
    }
    let path = out.join("psi0.csv");
    write_series(&path, &["n", "residual"], &rows)?;
    art.series_csvs.push(path);
    Ok(())
}

/// One point of a parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub overrides: BTreeMap<String, f64>,
    pub output_dir: PathBuf,
    pub status: String,
    pub error: Option<String>,
    pub all_pass: bool,
}

/// Sets `key` (dotted path, e.g. `grid.n`) in a JSON config.
pub fn apply_override(cfg: &mut serde_json::Value, key: &str, value: f64) -> Result<()> {
    let mut node = cfg;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        node = node
            .get_mut(*part)
            .ok_or_else(|| Error::Validation {
                path: key.to_string(),
                message: "no such config section".into(),
            })?;
    }
    let last = parts[parts.len() - 1];
    let obj = node.as_object_mut().ok_or_else(|| Error::Validation {
        path: key.to_string(),
        message: "not a config section".into(),
    })?;
    let v = if value.fract() == 0.0 && matches!(obj.get(last), Some(x) if x.is_u64() || x.is_i64()) {
        serde_json::Value::from(value as i64)
    } else {
        serde_json::Value::from(value)
    };
    obj.insert(last.to_string(), v);
    Ok(())
}

/// Runs `command` over the Cartesian product of `axes`, concurrently, each
/// in its own subdirectory of `out_dir`.
pub fn run_sweep(
    base: &serde_json::Value,
    axes: &[(String, Vec<f64>)],
    command: Command,
    out_dir: &Path,
) -> Result<Vec<SweepEntry>> {
    let mut points: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new()];
    for (key, values) in axes {
        if values.is_empty() {
            return Err(Error::Validation {
                path: key.clone(),
                message: "sweep axis has no values".into(),
            });
        }
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(key.clone(), *v);
                    q
                })
            })
            .collect();
    }
    let mut configs = Vec::with_capacity(points.len());
    for point in &points {
        let mut value = base.clone();
        for (k, v) in point {
            apply_override(&mut value, k, *v)?;
        }
        let cfg = ExperimentConfig::from_json(&value.to_string())?;
        cfg.validate_for(command)?;
        let name = if point.is_empty() {
            "base".to_string()
        } else {
            point.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("_")
        };
        configs.push((point.clone(), cfg, out_dir.join(name)));
    }
    std::fs::create_dir_all(out_dir)?;
    let entries: Vec<SweepEntry> = configs
        .into_par_iter()
        .map(|(overrides, cfg, dir)| match run_experiment(&cfg, command, &dir) {
            Ok(art) => SweepEntry {
                overrides,
                output_dir: dir,
                status: "complete".into(),
                error: None,
                all_pass: art.all_pass,
            },
            Err(e) => SweepEntry {
                overrides,
                output_dir: dir,
                status: "aborted".into(),
                error: Some(e.to_string()),
                all_pass: false,
            },
        })
        .collect();
    std::fs::write(out_dir.join("sweep.json"), serde_json::to_string_pretty(&entries)? + "\n")?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(amp: f64) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{
            "N": 2, "alpha": 1.0,
            "grid": {{"r0": 1.0, "r_max": 30.0, "n": 291}},
            "data": {{"center": 3.0, "width": 1.0, "amp_u0": {amp}, "amp_u1": {amp}}},
            "run": {{"T": 20.0, "cfl": 0.5, "record_every": 0.5, "fit_window": [4.0, 20.0]}},
            "checks": ["cor2", "thm1", "hardy", "monotonicity", "appfps"]
        }}"#
        ))
        .unwrap()
    }

    #[test]
    fn zero_data_passes_vacuously() {
        let dir = tempfile::tempdir().unwrap();
        let art = run_experiment(&small(0.0), Command::Compare, dir.path()).unwrap();
        assert!(art.all_pass);
        for csv in art.csvs() {
            let text = std::fs::read_to_string(csv).unwrap();
            for line in text.lines().skip(1) {
                if csv.ends_with("weight.csv") {
                    continue;
                }
                for v in line.split(',').skip(1) {
                    let x: f64 = v.parse().unwrap();
                    assert!(x == 0.0 || x.is_nan(), "{} {line}", csv.display());
                }
            }
        }
        let v = read_verdict(&art).unwrap();
        assert_eq!(v.status, "complete");
        assert!(v.rates.is_empty());
    }

    #[test]
    fn compare_writes_everything_and_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = small(1.0);
        let art = run_experiment(&cfg, Command::Compare, a.path()).unwrap();
        let again = run_experiment(&cfg, Command::Compare, b.path()).unwrap();
        for path in art.csvs().into_iter().chain(&art.svgs).chain([&art.verdict_json]) {
            assert!(path.exists(), "{}", path.display());
            let other = b.path().join(path.file_name().unwrap());
            assert_eq!(std::fs::read(path).unwrap(), std::fs::read(other).unwrap());
        }
        assert_eq!(art.svgs.len(), again.svgs.len());
        let v = read_verdict(&art).unwrap();
        assert!(v.rate("l2a_u").is_some() && v.rate("l2a_diff_gap").is_some());
        let header = std::fs::read_to_string(art.energy_csv.unwrap()).unwrap();
        assert!(header.starts_with("t,E_dx"));
        assert!(!header.lines().nth(1).unwrap().split(',').nth(8).unwrap().contains("nan"));
    }

    #[test]
    fn aborted_runs_are_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(1.0);
        cfg.run.fit_window = Some((19.5, 20.0));
        let err = run_experiment(&cfg, Command::Wave, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        let text = std::fs::read_to_string(dir.path().join("verdict.json")).unwrap();
        let v: VerdictReport = serde_json::from_str(&text).unwrap();
        assert_eq!(v.status, "aborted");
        assert!(!v.all_pass && v.error.is_some());
    }

    #[test]
    fn overrides_and_sweep() {
        let mut v: serde_json::Value = serde_json::to_value(small(1.0)).unwrap();
        apply_override(&mut v, "grid.n", 301.0).unwrap();
        assert_eq!(v["grid"]["n"], serde_json::json!(301));
        apply_override(&mut v, "alpha", 2.0).unwrap();
        assert_eq!(v["alpha"], serde_json::json!(2.0));
        assert!(apply_override(&mut v, "nope.x", 1.0).is_err());

        let dir = tempfile::tempdir().unwrap();
        let base = serde_json::to_value(small(1.0)).unwrap();
        let entries = run_sweep(&base, &[("alpha".into(), vec![0.5, 1.0]), ("eps".into(), vec![0.1])], Command::Wave, dir.path()).unwrap();
        assert_eq!(entries.len(), 2);
        assert!(entries.iter().all(|e| e.status == "complete"));
        assert!(dir.path().join("sweep.json").exists());
        assert!(dir.path().join("alpha=0.5_eps=0.1").join("energy.csv").exists());
    }
}
