//! C ABI over covert-lab: signal detection on raw counts, judgment tables,
//! synthetic worlds and the report pipeline.
//!
//! Conventions: every fallible function returns a [`ClStatus`]; on failure
//! the message is available from [`cl_last_error`] on the same thread.
//! Handles are opaque, created by `*_new`/`*_load` functions and released
//! with the matching `*_free`. Strings are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use covert_lab::cues::CueDictionary;
use covert_lab::model::{IdentityJudgment, JudgmentRecord, Truth};
use covert_lab::report::{pipeline_run, Inputs, ReportConfig};
use covert_lab::sdt::{
    bootstrap_dprime_ci, sdt, sdt_from_counts, wilson_interval, DenominatorMode, SdtCounts, SdtResult,
};
use covert_lab::sim::{simulate_experiment, WorldConfig};
use covert_lab::Error;

/// Status codes; 2–4 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClStatus {
    Ok = 0,
    Config = 2,
    Data = 3,
    Numeric = 4,
    NullPointer = 10,
    InvalidArgument = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClDenominatorMode {
    IncludeNotSure = 0,
    ExcludeNotSure = 1,
}

impl From<ClDenominatorMode> for DenominatorMode {
    fn from(m: ClDenominatorMode) -> Self {
        match m {
            ClDenominatorMode::IncludeNotSure => DenominatorMode::IncludeNotSure,
            ClDenominatorMode::ExcludeNotSure => DenominatorMode::ExcludeNotSure,
        }
    }
}

/// Judgment counts by truth (rows) and response (columns).
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClConfusion {
    pub ai_as_ai: u64,
    pub ai_as_human: u64,
    pub ai_not_sure: u64,
    pub human_as_ai: u64,
    pub human_as_human: u64,
    pub human_not_sure: u64,
}

impl From<&ClConfusion> for SdtCounts {
    fn from(c: &ClConfusion) -> Self {
        SdtCounts {
            ai_as_ai: c.ai_as_ai,
            ai_as_human: c.ai_as_human,
            ai_not_sure: c.ai_not_sure,
            human_as_ai: c.human_as_ai,
            human_as_human: c.human_as_human,
            human_not_sure: c.human_not_sure,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClSdtResult {
    pub n_ai: u64,
    pub n_human: u64,
    pub hits: u64,
    pub false_alarms: u64,
    pub h_raw: f64,
    pub f_raw: f64,
    pub h_star: f64,
    pub f_star: f64,
    pub d_prime: f64,
    pub beta: f64,
    pub hit_lo: f64,
    pub hit_hi: f64,
    pub fa_lo: f64,
    pub fa_hi: f64,
}

impl From<&SdtResult> for ClSdtResult {
    fn from(r: &SdtResult) -> Self {
        ClSdtResult {
            n_ai: r.n_ai,
            n_human: r.n_human,
            hits: r.hits,
            false_alarms: r.false_alarms,
            h_raw: r.h_raw,
            f_raw: r.f_raw,
            h_star: r.h_star,
            f_star: r.f_star,
            d_prime: r.d_prime,
            beta: r.beta,
            hit_lo: r.hit_ci.0,
            hit_hi: r.hit_ci.1,
            fa_lo: r.fa_ci.0,
            fa_hi: r.fa_ci.1,
        }
    }
}

/// Loaded judgment records.
pub struct ClJudgments {
    records: Vec<JudgmentRecord>,
}

/// A synthetic-world configuration.
pub struct ClWorld {
    config: WorldConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Arg(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ClStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ClStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            match e.exit_code() {
                2 => ClStatus::Config,
                4 => ClStatus::Numeric,
                _ => ClStatus::Data,
            }
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            ClStatus::NullPointer
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            ClStatus::InvalidArgument
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            ClStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// d′, β and Wilson intervals from a confusion table.
///
/// # Safety
/// `counts` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cl_sdt_from_counts(
    counts: *const ClConfusion,
    mode: ClDenominatorMode,
    out: *mut ClSdtResult,
) -> ClStatus {
    guard(|| {
        let counts = ref_arg(counts, "counts")?;
        let out = out_arg(out, "out")?;
        *out = (&sdt_from_counts(&counts.into(), mode.into())?).into();
        Ok(())
    })
}

/// Percentile bootstrap interval for d′ (resampling judgments per class).
///
/// # Safety
/// `counts`, `lo` and `hi` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cl_bootstrap_dprime_ci(
    counts: *const ClConfusion,
    mode: ClDenominatorMode,
    iterations: usize,
    seed: u64,
    lo: *mut f64,
    hi: *mut f64,
) -> ClStatus {
    guard(|| {
        let counts = ref_arg(counts, "counts")?;
        let (lo, hi) = (out_arg(lo, "lo")?, out_arg(hi, "hi")?);
        (*lo, *hi) = bootstrap_dprime_ci(&counts.into(), mode.into(), iterations, seed)?;
        Ok(())
    })
}

/// Wilson score interval for `successes` out of `n` at confidence `level`.
///
/// # Safety
/// `lo` and `hi` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cl_wilson_interval(
    successes: u64,
    n: u64,
    level: f64,
    lo: *mut f64,
    hi: *mut f64,
) -> ClStatus {
    guard(|| {
        let (lo, hi) = (out_arg(lo, "lo")?, out_arg(hi, "hi")?);
        if successes > n {
            return Err(Failure::Arg(format!("successes ({successes}) exceed n ({n})")));
        }
        (*lo, *hi) = wilson_interval(successes, n, level)?;
        Ok(())
    })
}

/// Loads truth-joined judgments from an event log, run or table directory,
/// or a judgments CSV with a truth column.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer. The handle
/// written to `*out` must be released with [`cl_judgments_free`].
#[no_mangle]
pub unsafe extern "C" fn cl_judgments_load(path: *const c_char, out: *mut *mut ClJudgments) -> ClStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let inputs = Inputs::load(Path::new(path), false)?;
        *out = Box::into_raw(Box::new(ClJudgments { records: inputs.judgments }));
        Ok(())
    })
}

/// Number of records held.
///
/// # Safety
/// `h` must be a live handle or NULL (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn cl_judgments_len(h: *const ClJudgments) -> usize {
    h.as_ref().map_or(0, |h| h.records.len())
}

/// Confusion counts of the held judgments.
///
/// # Safety
/// `h` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cl_judgments_confusion(h: *const ClJudgments, out: *mut ClConfusion) -> ClStatus {
    guard(|| {
        let h = ref_arg(h, "handle")?;
        let out = out_arg(out, "out")?;
        let c = SdtCounts::from_judgments(&h.records)?;
        *out = ClConfusion {
            ai_as_ai: c.ai_as_ai,
            ai_as_human: c.ai_as_human,
            ai_not_sure: c.ai_not_sure,
            human_as_ai: c.human_as_ai,
            human_as_human: c.human_as_human,
            human_not_sure: c.human_not_sure,
        };
        Ok(())
    })
}

/// Signal detection over the held judgments.
///
/// # Safety
/// `h` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cl_judgments_sdt(
    h: *const ClJudgments,
    mode: ClDenominatorMode,
    out: *mut ClSdtResult,
) -> ClStatus {
    guard(|| {
        let h = ref_arg(h, "handle")?;
        let out = out_arg(out, "out")?;
        *out = (&sdt(&h.records, mode.into())?).into();
        Ok(())
    })
}

/// Truth and response of record `i`: 0 = AI, 1 = Human, 2 = Not sure.
///
/// # Safety
/// `h` must be a live handle; `truth` and `judgment` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cl_judgments_get(
    h: *const ClJudgments,
    i: usize,
    truth: *mut u8,
    judgment: *mut u8,
) -> ClStatus {
    guard(|| {
        let h = ref_arg(h, "handle")?;
        let (truth, judgment) = (out_arg(truth, "truth")?, out_arg(judgment, "judgment")?);
        let r =
            h.records.get(i).ok_or_else(|| Failure::Arg(format!("index {i} out of range ({})", h.records.len())))?;
        *truth = match r.truth {
            Some(Truth::AI) => 0,
            Some(Truth::Human) => 1,
            None => return Err(Failure::Arg(format!("record {i} has no truth label"))),
        };
        *judgment = match r.judgment {
            IdentityJudgment::AI => 0,
            IdentityJudgment::Human => 1,
            IdentityJudgment::NotSure => 2,
        };
        Ok(())
    })
}

/// # Safety
/// `h` must come from [`cl_judgments_load`] or [`cl_world_simulate`] and not
/// be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn cl_judgments_free(h: *mut ClJudgments) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// A world from TOML text, or the default world when `toml` is NULL.
///
/// # Safety
/// `toml` must be NULL or a NUL-terminated string; `out` a valid pointer.
/// Release the handle with [`cl_world_free`].
#[no_mangle]
pub unsafe extern "C" fn cl_world_new(toml: *const c_char, out: *mut *mut ClWorld) -> ClStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let config =
            if toml.is_null() { WorldConfig::default() } else { WorldConfig::from_toml(str_arg(toml, "toml")?)? };
        *out = Box::into_raw(Box::new(ClWorld { config }));
        Ok(())
    })
}

/// # Safety
/// `w` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cl_world_set_seed(w: *mut ClWorld, seed: u64) -> ClStatus {
    guard(|| {
        out_arg(w, "world")?.config.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `w` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cl_world_set_groups(w: *mut ClWorld, n_groups: usize) -> ClStatus {
    guard(|| {
        if n_groups == 0 {
            return Err(Failure::Arg("n_groups must be at least 1".into()));
        }
        out_arg(w, "world")?.config.n_groups = n_groups;
        Ok(())
    })
}

/// Runs the world with the built-in dictionary. When `out_dir` is non-NULL
/// the event log and tables are written there; when `judgments` is non-NULL
/// it receives a handle to the truth-joined judgments.
///
/// # Safety
/// `w` must be a live handle; `out_dir` NULL or a NUL-terminated string;
/// `judgments` NULL or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cl_world_simulate(
    w: *const ClWorld,
    out_dir: *const c_char,
    judgments: *mut *mut ClJudgments,
) -> ClStatus {
    guard(|| {
        let w = ref_arg(w, "world")?;
        let dir = if out_dir.is_null() { None } else { Some(Path::new(str_arg(out_dir, "out_dir")?)) };
        let sim = simulate_experiment(&w.config, &CueDictionary::demo())?;
        let inputs = Inputs::from_sim(&sim)?;
        if let Some(dir) = dir {
            inputs.write_tables(dir)?;
            sim.log.save(&dir.join("events.ndjson"))?;
        }
        if let Some(out) = judgments.as_mut() {
            *out = Box::into_raw(Box::new(ClJudgments { records: inputs.judgments }));
        }
        Ok(())
    })
}

/// # Safety
/// `w` must come from [`cl_world_new`] and not be used afterwards. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn cl_world_free(w: *mut ClWorld) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Runs the full analysis pipeline over `input` into `out_dir`. `config_toml`
/// is report configuration text, or NULL for defaults. Numeric failures of
/// individual models yield `Numeric` after all artifacts are written.
///
/// # Safety
/// `input` and `out_dir` must be NUL-terminated strings; `config_toml` NULL
/// or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cl_report_run(
    input: *const c_char,
    out_dir: *const c_char,
    config_toml: *const c_char,
) -> ClStatus {
    guard(|| {
        let input = Path::new(str_arg(input, "input")?);
        let out_dir = Path::new(str_arg(out_dir, "out_dir")?);
        let cfg = if config_toml.is_null() {
            ReportConfig::default()
        } else {
            ReportConfig::from_toml(str_arg(config_toml, "config_toml")?)?
        };
        let inputs = Inputs::load(input, cfg.include_incomplete)?;
        let manifest = pipeline_run(&cfg, &inputs, out_dir, "ffi report")?;
        if !manifest.model_failures.is_empty() {
            return Err(Error::Numeric(manifest.model_failures.join("; ")).into());
        }
        Ok(())
    })
}
