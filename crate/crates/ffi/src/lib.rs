// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

//! C ABI over `dvs-core`: scenarios behind an opaque handle, benchmark
//! suites and chain audits returning JSON strings.
//!
//! Every function returns a [`DvsStatus`]. On failure the message is
//! available from [`dvs_last_error`] on the same thread. Strings handed out
//! by the library are released with [`dvs_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use dvs_core::bench::{cmd_bench, BenchError, SuiteConfig};
use dvs_core::ledger::{parse_chain_jsonl, verify_chain, LedgerError, Network};
use dvs_core::scenario::{cmd_simulate, ScenarioConfig, ScenarioError, ScenarioLog};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DvsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Unreadable or invalid input files.
    ConfigError = 3,
    RuntimeError = 4,
    /// The scenario ran into voltage collapse; its results are available.
    Collapse = 5,
    /// The call was used out of order, e.g. reading results before a run.
    InvalidState = 6,
    Panic = 7,
}

/// A loaded scenario and, once run, its results.
pub struct DvsScenario {
    config: ScenarioConfig,
    result: Option<(ScenarioLog, Network)>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("no interior nul")));
}

struct Failure(DvsStatus, String);

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = if e.is_config() {
            DvsStatus::ConfigError
        } else {
            DvsStatus::RuntimeError
        };
        Failure(code, e.to_string())
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Scenario(s) => s.into(),
            BenchError::Spec(_) | BenchError::Ledger(LedgerError::Config(_)) => {
                Failure(DvsStatus::ConfigError, e.to_string())
            }
            _ => Failure(DvsStatus::RuntimeError, e.to_string()),
        }
    }
}

/// Runs `f`, converting failures and panics into status codes.
fn guard(f: impl FnOnce() -> Result<DvsStatus, Failure>) -> DvsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            DvsStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(DvsStatus::NullPointer, "null string argument".into()));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(DvsStatus::InvalidUtf8, "argument is not valid UTF-8".into()))
}

fn out_ptr<T>(p: *mut T) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(DvsStatus::NullPointer, "null output argument".into()))
    } else {
        Ok(())
    }
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("no interior nul").into_raw()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dvs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn dvs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn dvs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a scenario file; relative paths inside it resolve against its
/// directory.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvs_scenario_open(path: *const c_char, out: *mut *mut DvsScenario) -> DvsStatus {
    guard(|| {
        out_ptr(out)?;
        *out = ptr::null_mut();
        let path = PathBuf::from(text(path)?);
        let config = ScenarioConfig::load(&path)?;
        *out = Box::into_raw(Box::new(DvsScenario { config, result: None }));
        Ok(DvsStatus::Ok)
    })
}

/// Replaces the scenario's seed.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dvs_scenario_set_seed(scenario: *mut DvsScenario, seed: u64) -> DvsStatus {
    guard(|| {
        out_ptr(scenario)?;
        (*scenario).config.seed = seed;
        Ok(DvsStatus::Ok)
    })
}

/// Initializes a fresh network and runs the scenario in logical time.
/// Returns `DVS_STATUS_COLLAPSE` when the grid collapsed; results are
/// available either way.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dvs_scenario_run(scenario: *mut DvsScenario) -> DvsStatus {
    guard(|| {
        out_ptr(scenario)?;
        let s = &mut *scenario;
        s.result = None;
        let (log, net) = cmd_simulate(&s.config, false)?;
        let collapsed = log.collapsed;
        s.result = Some((log, net));
        Ok(if collapsed { DvsStatus::Collapse } else { DvsStatus::Ok })
    })
}

/// The last run's log as JSON lines.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvs_scenario_log_jsonl(scenario: *const DvsScenario, out: *mut *mut c_char) -> DvsStatus {
    guard(|| {
        out_ptr(out)?;
        *out = ptr::null_mut();
        out_ptr(scenario.cast_mut())?;
        let (log, _) = results(&*scenario)?;
        *out = c_string(log.to_jsonl());
        Ok(DvsStatus::Ok)
    })
}

/// Head hash of `channel` after the last run.
///
/// # Safety
/// `scenario` must be a live handle; `channel` a nul-terminated string;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvs_scenario_chain_hash(
    scenario: *const DvsScenario,
    channel: *const c_char,
    out: *mut *mut c_char,
) -> DvsStatus {
    guard(|| {
        out_ptr(out)?;
        *out = ptr::null_mut();
        out_ptr(scenario.cast_mut())?;
        let channel = text(channel)?;
        let (_, net) = results(&*scenario)?;
        let hash = net
            .chain_hash(channel)
            .map_err(|e| Failure(DvsStatus::ConfigError, e.to_string()))?;
        *out = c_string(hash);
        Ok(DvsStatus::Ok)
    })
}

/// The last run's ledger of `channel`, one block per line.
///
/// # Safety
/// `scenario` must be a live handle; `channel` a nul-terminated string;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvs_scenario_export_jsonl(
    scenario: *const DvsScenario,
    channel: *const c_char,
    out: *mut *mut c_char,
) -> DvsStatus {
    guard(|| {
        out_ptr(out)?;
        *out = ptr::null_mut();
        out_ptr(scenario.cast_mut())?;
        let channel = text(channel)?;
        let (_, net) = results(&*scenario)?;
        let mut buf = Vec::new();
        net.export_jsonl(channel, &mut buf)
            .map_err(|e| Failure(DvsStatus::ConfigError, e.to_string()))?;
        *out = c_string(String::from_utf8(buf).expect("json is utf8"));
        Ok(DvsStatus::Ok)
    })
}

/// Releases a scenario handle. NULL is ignored.
///
/// # Safety
/// `scenario` must come from [`dvs_scenario_open`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn dvs_scenario_free(scenario: *mut DvsScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

fn results(s: &DvsScenario) -> Result<&(ScenarioLog, Network), Failure> {
    s.result
        .as_ref()
        .ok_or_else(|| Failure(DvsStatus::InvalidState, "scenario has not been run".into()))
}

/// Runs a benchmark suite file and returns the full report as JSON. When
/// `override_seed` is non-zero, `seed` replaces the suite's base seed.
///
/// # Safety
/// `suite_path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvs_bench_run(
    suite_path: *const c_char,
    override_seed: i32,
    seed: u64,
    out: *mut *mut c_char,
) -> DvsStatus {
    guard(|| {
        out_ptr(out)?;
        *out = ptr::null_mut();
        let path = PathBuf::from(text(suite_path)?);
        let cfg = SuiteConfig::load(&path)?;
        let report = cmd_bench(&cfg, (override_seed != 0).then_some(seed))?;
        *out = c_string(serde_json::to_string(&report).expect("report serializes"));
        Ok(DvsStatus::Ok)
    })
}

/// Audits a ledger exported as JSON lines. `first_broken` receives the
/// number of the first bad block, or -1 when the chain is intact.
///
/// # Safety
/// `jsonl` must be a nul-terminated string; `first_broken` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvs_verify_chain_jsonl(jsonl: *const c_char, first_broken: *mut i64) -> DvsStatus {
    guard(|| {
        out_ptr(first_broken)?;
        let blocks = parse_chain_jsonl(text(jsonl)?).map_err(|e| Failure(DvsStatus::ConfigError, e.to_string()))?;
        *first_broken = verify_chain(&blocks).first_broken.map_or(-1, |n| n as i64);
        Ok(DvsStatus::Ok)
    })
}
