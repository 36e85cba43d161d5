//! C ABI for `dwlab`.
//!
//! Every fallible function returns a [`DwStatus`]; on failure the message is
//! available from [`dw_last_error_message`] on the same thread. Handles are
//! opaque, created by `*_new`/`*_run` and released by the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use dwlab::config::{Command, ExperimentConfig};
use dwlab::experiment::{run_experiment, simulate_wave, RunArtifact, WaveSummary};
use dwlab::grid::{DampingProfile, RadialGrid};
use dwlab::rates::{fit_decay_slope, rate_table};
use dwlab::weight::{assemble_a_eps, AuxiliaryWeight};
use dwlab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    ValidationError = 4,
    RuntimeError = 5,
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DwStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DwStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            DwStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_error(msg);
            DwStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            match e {
                Error::Parse(_) => DwStatus::ParseError,
                Error::Validation { .. } => DwStatus::ValidationError,
                Error::InvalidParameter { .. } | Error::LengthMismatch { .. } | Error::GridMismatch => {
                    DwStatus::InvalidArgument
                }
                _ => DwStatus::RuntimeError,
            }
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            DwStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure::Invalid(format!("{what} is not UTF-8: {e}")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next `dw_*` call on the same thread.
#[no_mangle]
pub extern "C" fn dw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn dw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Auxiliary weight `A_ε` on a radial grid.
pub struct DwWeight {
    weight: AuxiliaryWeight,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DwWeightReport {
    pub epsilon: f64,
    pub h: f64,
    pub r_eps: f64,
    pub lambda_eps: f64,
    pub ellip_min: f64,
    pub ellip_max: f64,
    pub ellip_tol: f64,
    pub ellip_pass: bool,
    pub growth_lower: f64,
    pub growth_upper: f64,
    pub min_value: f64,
    pub grad_ratio_sup: f64,
    pub grad_ratio_pass: bool,
    pub tail_ratio_min: f64,
    pub tail_ratio_max: f64,
}

/// Builds `A_ε` for `a(r) = a0 r^alpha` on `n` nodes of `[r0, r_max]`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn dw_weight_new(
    dim: u32,
    alpha: f64,
    a0: f64,
    r0: f64,
    r_max: f64,
    n: usize,
    eps: f64,
    out: *mut *mut DwWeight,
) -> DwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let grid = RadialGrid::new(r0, r_max, n, dim as usize)?;
        let p = DampingProfile::power(alpha, a0)?;
        let weight = assemble_a_eps(&p, &grid, eps)?;
        *out = Box::into_raw(Box::new(DwWeight { weight }));
        Ok(())
    })
}

/// # Safety
/// `w` must come from [`dw_weight_new`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dw_weight_report(w: *const DwWeight, out: *mut DwWeightReport) -> DwStatus {
    guard(|| {
        let w = &w.as_ref().ok_or(Failure::Null("weight"))?.weight;
        let out = out_arg(out, "out")?;
        let r = &w.report;
        *out = DwWeightReport {
            epsilon: r.epsilon,
            h: r.h,
            r_eps: w.r_eps,
            lambda_eps: w.lambda_eps,
            ellip_min: r.ellip_min,
            ellip_max: r.ellip_max,
            ellip_tol: r.ellip_tol,
            ellip_pass: r.ellip_pass,
            growth_lower: r.growth_lower,
            growth_upper: r.growth_upper,
            min_value: r.min_value,
            grad_ratio_sup: r.grad_ratio_sup,
            grad_ratio_pass: r.grad_ratio_pass,
            tail_ratio_min: r.tail_ratio_min,
            tail_ratio_max: r.tail_ratio_max,
        };
        Ok(())
    })
}

/// Number of grid nodes, 0 for NULL.
///
/// # Safety
/// `w` must be NULL or come from [`dw_weight_new`].
#[no_mangle]
pub unsafe extern "C" fn dw_weight_len(w: *const DwWeight) -> usize {
    w.as_ref().map_or(0, |w| w.weight.a_eps.len())
}

/// Copies `A_ε` and (if `da_out` is not NULL) `A_ε'` into buffers of `len`
/// doubles; `len` must equal [`dw_weight_len`].
///
/// # Safety
/// Buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dw_weight_values(w: *const DwWeight, a_out: *mut f64, da_out: *mut f64, len: usize) -> DwStatus {
    guard(|| {
        let w = &w.as_ref().ok_or(Failure::Null("weight"))?.weight;
        if a_out.is_null() {
            return Err(Failure::Null("a_out"));
        }
        if len != w.a_eps.len() {
            return Err(Error::LengthMismatch {
                expected: w.a_eps.len(),
                found: len,
            }
            .into());
        }
        std::slice::from_raw_parts_mut(a_out, len).copy_from_slice(w.a_eps.values());
        if !da_out.is_null() {
            std::slice::from_raw_parts_mut(da_out, len).copy_from_slice(w.da_eps.values());
        }
        Ok(())
    })
}

/// # Safety
/// `w` must be NULL or come from [`dw_weight_new`], and not be used again.
#[no_mangle]
pub unsafe extern "C" fn dw_weight_free(w: *mut DwWeight) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Predicted decay exponents; absent entries are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DwRateTable {
    pub dim: u32,
    pub alpha: f64,
    pub cor2_exp: f64,
    pub thm1_exp: f64,
    pub propmain_ea_exp: f64,
    pub propmain_e1_exp: f64,
    pub heat_l1_exp: f64,
    pub lambda0: f64,
    pub p_alpha: f64,
    pub delta_zero_allowed: bool,
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dw_rate_table(dim: u32, alpha: f64, eps: f64, out: *mut DwRateTable) -> DwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let t = rate_table(dim as usize, alpha, eps)?;
        *out = DwRateTable {
            dim,
            alpha,
            cor2_exp: t.cor2_exp,
            thm1_exp: t.thm1_exp,
            propmain_ea_exp: t.propmain_ea_exp,
            propmain_e1_exp: t.propmain_e1_exp,
            heat_l1_exp: t.heat_l1_exp.unwrap_or(f64::NAN),
            lambda0: t.lambda0,
            p_alpha: t.p_alpha.unwrap_or(f64::NAN),
            delta_zero_allowed: t.delta_zero_allowed,
        };
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DwDecayFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub n_points: usize,
    pub residual_rms: f64,
}

/// Log-log least squares of `v` against `t` over `[t_lo, t_hi]`.
///
/// # Safety
/// `t` and `v` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dw_fit_decay_slope(
    t: *const f64,
    v: *const f64,
    len: usize,
    t_lo: f64,
    t_hi: f64,
    out: *mut DwDecayFit,
) -> DwStatus {
    guard(|| {
        if t.is_null() || v.is_null() {
            return Err(Failure::Null("series"));
        }
        let out = out_arg(out, "out")?;
        let ts = std::slice::from_raw_parts(t, len);
        let vs = std::slice::from_raw_parts(v, len);
        let series: Vec<(f64, f64)> = ts.iter().copied().zip(vs.iter().copied()).collect();
        let f = fit_decay_slope(&series, (t_lo, t_hi))?;
        *out = DwDecayFit {
            slope: f.slope,
            stderr: f.stderr,
            intercept: f.intercept,
            t_lo: f.window.0,
            t_hi: f.window.1,
            n_points: f.n_points,
            residual_rms: f.residual_rms,
        };
        Ok(())
    })
}

/// A finished orchestrated run and its verdict.
pub struct DwExperiment {
    artifact: RunArtifact,
    verdict_json: CString,
}

/// Runs `command` (`weight`, `wave`, `heat`, `compare`, `transform-check`,
/// `duhamel`) for a JSON config, writing artifacts into `output_dir`.
/// A run whose checks fail still succeeds; see [`dw_experiment_all_pass`].
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dw_experiment_run(
    config_json: *const c_char,
    command: *const c_char,
    output_dir: *const c_char,
    out: *mut *mut DwExperiment,
) -> DwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let cfg = ExperimentConfig::from_json(str_arg(config_json, "config_json")?)?;
        let command: Command = str_arg(command, "command")?.parse()?;
        let dir = str_arg(output_dir, "output_dir")?;
        let artifact = run_experiment(&cfg, command, Path::new(dir))?;
        let verdict = std::fs::read_to_string(&artifact.verdict_json).map_err(Error::from)?;
        let verdict_json = CString::new(verdict).map_err(|e| Failure::Invalid(e.to_string()))?;
        *out = Box::into_raw(Box::new(DwExperiment { artifact, verdict_json }));
        Ok(())
    })
}

/// # Safety
/// `e` must be NULL or come from [`dw_experiment_run`].
#[no_mangle]
pub unsafe extern "C" fn dw_experiment_all_pass(e: *const DwExperiment) -> bool {
    e.as_ref().is_some_and(|e| e.artifact.all_pass)
}

/// Verdict JSON owned by the handle, or NULL.
///
/// # Safety
/// `e` must be NULL or come from [`dw_experiment_run`].
#[no_mangle]
pub unsafe extern "C" fn dw_experiment_verdict_json(e: *const DwExperiment) -> *const c_char {
    e.as_ref().map_or(std::ptr::null(), |e| e.verdict_json.as_ptr())
}

/// # Safety
/// `e` must be NULL or come from [`dw_experiment_run`], and not be used again.
#[no_mangle]
pub unsafe extern "C" fn dw_experiment_free(e: *mut DwExperiment) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// In-memory wave run with energy records.
pub struct DwWaveRun {
    summary: WaveSummary,
}

/// Columns of a [`DwWaveRun`]; absent values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DwSeries {
    Time = 0,
    L2aU = 1,
    Ea = 2,
    E1 = 3,
    E2 = 4,
    HardyMargin = 5,
    MonoViolation = 6,
}

/// Runs the wave solver for a JSON config without writing files.
///
/// # Safety
/// `config_json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dw_wave_run_new(config_json: *const c_char, out: *mut *mut DwWaveRun) -> DwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let cfg = ExperimentConfig::from_json(str_arg(config_json, "config_json")?)?;
        let summary = simulate_wave(&cfg)?;
        *out = Box::into_raw(Box::new(DwWaveRun { summary }));
        Ok(())
    })
}

/// Number of records, 0 for NULL.
///
/// # Safety
/// `run` must be NULL or come from [`dw_wave_run_new`].
#[no_mangle]
pub unsafe extern "C" fn dw_wave_run_len(run: *const DwWaveRun) -> usize {
    run.as_ref().map_or(0, |r| r.summary.records.len())
}

/// Largest `|u|` seen beyond `R0 + t + 2 dr`; NaN for NULL.
///
/// # Safety
/// `run` must be NULL or come from [`dw_wave_run_new`].
#[no_mangle]
pub unsafe extern "C" fn dw_wave_run_max_leak(run: *const DwWaveRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.summary.max_leak)
}

/// Copies one column into `out`, which must hold [`dw_wave_run_len`] doubles.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dw_wave_run_series(run: *const DwWaveRun, series: DwSeries, out: *mut f64, len: usize) -> DwStatus {
    guard(|| {
        let recs = &run.as_ref().ok_or(Failure::Null("run"))?.summary.records;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        if len != recs.len() {
            return Err(Error::LengthMismatch {
                expected: recs.len(),
                found: len,
            }
            .into());
        }
        let dst = std::slice::from_raw_parts_mut(out, len);
        for (d, r) in dst.iter_mut().zip(recs) {
            *d = match series {
                DwSeries::Time => r.t,
                DwSeries::L2aU => r.l2a_u,
                DwSeries::Ea => r.parts.e_a,
                DwSeries::E1 => r.e1(),
                DwSeries::E2 => r.e2(),
                DwSeries::HardyMargin => r.hardy_margin,
                DwSeries::MonoViolation => r.mono_violation.unwrap_or(f64::NAN),
            };
        }
        Ok(())
    })
}

/// # Safety
/// `run` must be NULL or come from [`dw_wave_run_new`], and not be used again.
#[no_mangle]
pub unsafe extern "C" fn dw_wave_run_free(run: *mut DwWaveRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
