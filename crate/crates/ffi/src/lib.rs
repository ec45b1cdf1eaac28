//! C ABI over the simulator.
//!
//! Handles are opaque and owned by the caller; every `*_new`/`*_load`/`wsn_run` result must be
//! released with the matching `*_free`. Fallible calls return a [`WsnStatus`] and leave a message
//! for [`wsn_last_error`] on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use wsnsim::harness::{run_one, Row};
use wsnsim::scenario::Scenario;
use wsnsim::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WsnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Validation = 4,
    Io = 5,
    Simulation = 6,
    Panic = 7,
}

/// A scenario being configured.
pub struct WsnScenario {
    inner: Scenario,
}

/// The outcome of one run.
pub struct WsnResult {
    row: Row,
    debited_j: f64,
    initial_j: f64,
}

/// Plain numeric summary of a run. Optional values are NaN when absent.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct WsnSummary {
    pub pdr: f64,
    pub mean_delay_s: f64,
    pub energy_total_mwh: f64,
    pub energy_per_node_mwh: f64,
    pub first_node_death_s: f64,
    pub detection_latency_s: f64,
    pub detection_triggered: bool,
    pub true_positives: u32,
    pub false_positives: u32,
    pub energy_debited_j: f64,
    pub energy_initial_j: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: WsnStatus, msg: impl Into<String>) -> WsnStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> WsnStatus {
    match e {
        Error::Parse { .. } => WsnStatus::Parse,
        Error::Validation { .. } | Error::InvalidParams(_) => WsnStatus::Validation,
        Error::Io(_) => WsnStatus::Io,
        _ => WsnStatus::Simulation,
    }
}

fn from_error(e: Error) -> WsnStatus {
    let s = status_of(&e);
    fail(s, e.to_string())
}

fn guard(f: impl FnOnce() -> WsnStatus) -> WsnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(WsnStatus::Panic, "panic inside wsnsim"),
    }
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, WsnStatus> {
    if p.is_null() {
        return Err(fail(WsnStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(WsnStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// A scenario holding the default parameters.
#[no_mangle]
pub extern "C" fn wsn_scenario_new() -> *mut WsnScenario {
    Box::into_raw(Box::new(WsnScenario {
        inner: Scenario::default(),
    }))
}

/// Loads a scenario file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn wsn_scenario_load(
    path: *const c_char,
    out: *mut *mut WsnScenario,
) -> WsnStatus {
    guard(|| {
        if out.is_null() {
            return fail(WsnStatus::NullPointer, "out is null");
        }
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match Scenario::load(Path::new(path)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(WsnScenario { inner }));
                WsnStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Sets one scenario key, using the same names as scenario files.
///
/// # Safety
/// `s` must come from this library; `key` and `value` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn wsn_scenario_set(
    s: *mut WsnScenario,
    key: *const c_char,
    value: *const c_char,
) -> WsnStatus {
    guard(|| {
        let Some(s) = s.as_mut() else {
            return fail(WsnStatus::NullPointer, "scenario is null");
        };
        let (key, value) = match (str_arg(key, "key"), str_arg(value, "value")) {
            (Ok(k), Ok(v)) => (k, v),
            (Err(e), _) | (_, Err(e)) => return e,
        };
        match s.inner.set(key.trim(), value.trim()) {
            Ok(()) => {
                s.inner.finish();
                WsnStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `s` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wsn_scenario_free(s: *mut WsnScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Runs the scenario to its end time and stores the outcome in `*out`.
///
/// # Safety
/// `s` must come from this library and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wsn_run(s: *const WsnScenario, out: *mut *mut WsnResult) -> WsnStatus {
    guard(|| {
        let Some(s) = s.as_ref() else {
            return fail(WsnStatus::NullPointer, "scenario is null");
        };
        if out.is_null() {
            return fail(WsnStatus::NullPointer, "out is null");
        }
        match run_one(&s.inner, None) {
            Ok(o) => {
                *out = Box::into_raw(Box::new(WsnResult {
                    row: o.row,
                    debited_j: o.debited_j,
                    initial_j: o.initial_j,
                }));
                WsnStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `r` must come from [`wsn_run`] and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wsn_result_summary(
    r: *const WsnResult,
    out: *mut WsnSummary,
) -> WsnStatus {
    let (Some(r), false) = (r.as_ref(), out.is_null()) else {
        return fail(WsnStatus::NullPointer, "result or out is null");
    };
    let row = &r.row;
    *out = WsnSummary {
        pdr: row.pdr,
        mean_delay_s: row.mean_delay_s.unwrap_or(f64::NAN),
        energy_total_mwh: row.energy_total_mwh,
        energy_per_node_mwh: row.energy_per_node_mwh,
        first_node_death_s: row.first_node_death_s.unwrap_or(f64::NAN),
        detection_latency_s: row.detection_latency_s.unwrap_or(f64::NAN),
        detection_triggered: row.detection_triggered,
        true_positives: row.true_positives,
        false_positives: row.false_positives,
        energy_debited_j: r.debited_j,
        energy_initial_j: r.initial_j,
    };
    WsnStatus::Ok
}

/// Copies the run's CSV row (no header, NUL-terminated) into `buf`.
/// Returns the length the row needs without the NUL; nothing is written when `cap` is too small.
///
/// # Safety
/// `r` must come from [`wsn_run`]; `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn wsn_result_csv(
    r: *const WsnResult,
    buf: *mut c_char,
    cap: usize,
) -> usize {
    let Some(r) = r.as_ref() else {
        set_error("result is null");
        return 0;
    };
    copy_out(&r.row.to_csv(), buf, cap)
}

/// # Safety
/// `r` must be null or come from [`wsn_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wsn_result_free(r: *mut WsnResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// The CSV header matching [`wsn_result_csv`] rows. Static; do not free.
#[no_mangle]
pub extern "C" fn wsn_csv_header() -> *const c_char {
    const H: &str = concat!(
        "protocol,seed,n_nodes,n_clusters,pct_malicious,load_packets,payload_bytes,pdr,mean_delay_s,",
        "energy_total_mwh,energy_per_node_mwh,first_node_death_s,detection_triggered,",
        "detection_latency_s,true_positives,false_positives,status\0"
    );
    H.as_ptr().cast()
}

/// Copies the last error message of this thread into `buf`, same contract as [`wsn_result_csv`].
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn wsn_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| copy_out(&e.borrow(), buf, cap))
}

unsafe fn copy_out(s: &str, buf: *mut c_char, cap: usize) -> usize {
    let n = s.len();
    if !buf.is_null() && cap > n {
        std::ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), n);
        *buf.add(n) = 0;
    }
    n
}
