//! C ABI over the scenario pipeline and a few numerical entry points.
//!
//! Every function returns a [`RegpackStatus`]; on failure the message is
//! available from [`regpack_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use regpack::cli::scenario::builtin_source;
use regpack::cli::{parse_scenario, run_scenario, RunError, RunOptions, RunReport, Scenario};
use regpack::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegpackStatus {
    Ok = 0,
    InvalidArgument = 1,
    Parse = 2,
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

/// Parsed scenario plus the overrides applied so far.
pub struct RegpackScenario {
    source: String,
    overrides: Vec<String>,
    parsed: Scenario,
}

/// Result of one pipeline run.
pub struct RegpackReport {
    report: RunReport,
    metrics_json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn fail(status: RegpackStatus, msg: impl Into<String>) -> RegpackStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> RegpackStatus {
    match e {
        Error::Parse { .. } => RegpackStatus::Parse,
        Error::InvalidInput(_) => RegpackStatus::InvalidArgument,
        _ => RegpackStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> RegpackStatus) -> RegpackStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == RegpackStatus::Ok {
                set_error("");
            }
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            fail(RegpackStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, RegpackStatus> {
    if p.is_null() {
        return Err(fail(RegpackStatus::InvalidArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(RegpackStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn regpack_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static string.
#[no_mangle]
pub extern "C" fn regpack_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

fn new_scenario(source: String, out: *mut *mut RegpackScenario) -> RegpackStatus {
    match parse_scenario(&source, &[]) {
        Ok(parsed) => {
            let h = Box::new(RegpackScenario {
                source,
                overrides: Vec::new(),
                parsed,
            });
            unsafe { *out = Box::into_raw(h) };
            RegpackStatus::Ok
        }
        Err(e) => fail(status_of(&e), e.to_string()),
    }
}

/// Parses a scenario from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn regpack_scenario_parse(toml: *const c_char, out: *mut *mut RegpackScenario) -> RegpackStatus {
    guard(|| {
        if out.is_null() {
            return fail(RegpackStatus::InvalidArgument, "out is null");
        }
        let src = tri!(str_arg(toml, "toml"));
        new_scenario(src.to_string(), out)
    })
}

/// Loads a built-in scenario by name (without the `builtin:` prefix).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn regpack_scenario_builtin(name: *const c_char, out: *mut *mut RegpackScenario) -> RegpackStatus {
    guard(|| {
        if out.is_null() {
            return fail(RegpackStatus::InvalidArgument, "out is null");
        }
        let name = tri!(str_arg(name, "name"));
        match builtin_source(name) {
            Some(src) => new_scenario(src.to_string(), out),
            None => fail(RegpackStatus::InvalidArgument, format!("no builtin scenario `{name}`")),
        }
    })
}

/// Applies a `key=value` override; the scenario is unchanged on failure.
///
/// # Safety
/// `scenario` must come from this library; `key_value` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn regpack_scenario_set(scenario: *mut RegpackScenario, key_value: *const c_char) -> RegpackStatus {
    guard(|| {
        let Some(s) = scenario.as_mut() else {
            return fail(RegpackStatus::InvalidArgument, "scenario is null");
        };
        let kv = tri!(str_arg(key_value, "key_value"));
        let mut overrides = s.overrides.clone();
        overrides.push(kv.to_string());
        match parse_scenario(&s.source, &overrides) {
            Ok(parsed) => {
                s.parsed = parsed;
                s.overrides = overrides;
                RegpackStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `scenario` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn regpack_scenario_free(scenario: *mut RegpackScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs the pipeline and writes artifacts under `out_dir`. A run whose
/// gates fail still returns `Ok`; query [`regpack_report_passed`].
///
/// # Safety
/// `scenario` must come from this library, `out_dir` must be a
/// NUL-terminated path and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn regpack_run(
    scenario: *const RegpackScenario,
    out_dir: *const c_char,
    summary_only: c_int,
    out: *mut *mut RegpackReport,
) -> RegpackStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(RegpackStatus::InvalidArgument, "scenario is null");
        };
        if out.is_null() {
            return fail(RegpackStatus::InvalidArgument, "out is null");
        }
        let dir = tri!(str_arg(out_dir, "out_dir"));
        let opts = RunOptions {
            out_dir: PathBuf::from(dir),
            summary_only: summary_only != 0,
            ..RunOptions::default()
        };
        match run_scenario(&s.parsed, &opts) {
            Ok(report) => {
                let json = serde_json::to_string(&report.metrics).unwrap_or_default();
                let h = Box::new(RegpackReport {
                    report,
                    metrics_json: CString::new(json).unwrap_or_default(),
                });
                *out = Box::into_raw(h);
                RegpackStatus::Ok
            }
            Err(e) => {
                let status = match &e {
                    RunError::Io(_) => RegpackStatus::Io,
                    RunError::Numerical { error, .. } => status_of(error),
                };
                fail(status, e.to_string())
            }
        }
    })
}

/// Whether every gate declared by the scenario passed (1) or not (0).
///
/// # Safety
/// `report` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn regpack_report_passed(report: *const RegpackReport, out: *mut c_int) -> RegpackStatus {
    guard(|| match (report.as_ref(), out.is_null()) {
        (Some(r), false) => {
            *out = c_int::from(r.report.passed());
            RegpackStatus::Ok
        }
        _ => fail(RegpackStatus::InvalidArgument, "null argument"),
    })
}

/// Relative tracking error over the last fifth of the horizon.
///
/// # Safety
/// `report` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn regpack_report_tail_error(report: *const RegpackReport, out: *mut f64) -> RegpackStatus {
    guard(|| match (report.as_ref(), out.is_null()) {
        (Some(r), false) => {
            *out = r.report.metrics.regulation.tail_relative_error;
            RegpackStatus::Ok
        }
        _ => fail(RegpackStatus::InvalidArgument, "null argument"),
    })
}

/// The run's metrics as JSON. Owned by the report.
///
/// # Safety
/// `report` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn regpack_report_metrics_json(report: *const RegpackReport) -> *const c_char {
    match report.as_ref() {
        Some(r) => r.metrics_json.as_ptr(),
        None => std::ptr::null(),
    }
}

/// # Safety
/// `report` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn regpack_report_free(report: *mut RegpackReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Gain `k` (length `n`) placing the eigenvalues of `A + b·k` at the given
/// poles. `a` is `n×n` row-major; complex poles must come in conjugate
/// pairs.
///
/// # Safety
/// `a` must hold `n*n` values, `b`, `poles_re`, `poles_im` and `k_out`
/// `n` values each.
#[no_mangle]
pub unsafe extern "C" fn regpack_place_poles(
    a: *const f64,
    b: *const f64,
    n: usize,
    poles_re: *const f64,
    poles_im: *const f64,
    k_out: *mut f64,
) -> RegpackStatus {
    guard(|| {
        if a.is_null() || b.is_null() || poles_re.is_null() || poles_im.is_null() || k_out.is_null() || n == 0 {
            return fail(RegpackStatus::InvalidArgument, "null argument or n = 0");
        }
        let am = nalgebra::DMatrix::from_row_slice(n, n, std::slice::from_raw_parts(a, n * n));
        let bm = nalgebra::DMatrix::from_column_slice(n, 1, std::slice::from_raw_parts(b, n));
        let re = std::slice::from_raw_parts(poles_re, n);
        let im = std::slice::from_raw_parts(poles_im, n);
        let poles: Vec<num_complex::Complex64> =
            re.iter().zip(im).map(|(r, i)| num_complex::Complex64::new(*r, *i)).collect();
        match regpack::sim::place_poles(&am, &bm, &poles) {
            Ok(k) => {
                std::slice::from_raw_parts_mut(k_out, n).copy_from_slice(k.as_slice());
                RegpackStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Moore–Penrose pseudoinverse of the `rows×cols` row-major matrix `m`,
/// written row-major (`cols×rows`) to `out`; `rank_out` may be null.
///
/// # Safety
/// `m` and `out` must hold `rows*cols` values.
#[no_mangle]
pub unsafe extern "C" fn regpack_pinv(
    m: *const f64,
    rows: usize,
    cols: usize,
    rel_tol: f64,
    out: *mut f64,
    rank_out: *mut usize,
) -> RegpackStatus {
    guard(|| {
        if m.is_null() || out.is_null() || rows == 0 || cols == 0 {
            return fail(RegpackStatus::InvalidArgument, "null argument or empty matrix");
        }
        let mm = nalgebra::DMatrix::from_row_slice(rows, cols, std::slice::from_raw_parts(m, rows * cols));
        match regpack::numkit::pinv(&mm, rel_tol) {
            Ok((p, rank)) => {
                let dst = std::slice::from_raw_parts_mut(out, rows * cols);
                for (i, row) in p.row_iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        dst[i * rows + j] = *v;
                    }
                }
                if !rank_out.is_null() {
                    *rank_out = rank;
                }
                RegpackStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}
