//! C interface to the d2dsim simulator.
//!
//! Scenarios and reports are opaque handles created and destroyed by this
//! library. Every fallible function returns a [`D2dStatus`]; on failure,
//! [`d2d_last_error`] describes the problem. Panics never cross the
//! boundary: they are caught and reported as [`D2dStatus::Panic`].
//!
//! The header `include/d2dsim.h` is generated from this file at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use d2dsim::channel::{CqiTable, MAX_CQI};
use d2dsim::cli::load_scenario;
use d2dsim::config::{parse_scenario, ScenarioConfig};
use d2dsim::engine::{self, MetricsReport, RunOptions};
use d2dsim::mode_selection::best_cqi_decide;
use d2dsim::stack::amc_tbs;
use d2dsim::{Error, Mode};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum D2dStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A numeric argument was out of range.
    InvalidArgument = 3,
    /// The scenario is malformed or inconsistent.
    Config = 4,
    /// The run failed.
    Runtime = 5,
    /// A file could not be read or written.
    Io = 6,
    /// The library panicked; the handles passed in should be discarded.
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum D2dMode {
    /// Direct mode: the pair talks over the sidelink.
    Dm = 0,
    /// Infrastructure mode: traffic goes up to the eNB and back down.
    Im = 1,
}

impl From<Mode> for D2dMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Dm => D2dMode::Dm,
            Mode::Im => D2dMode::Im,
        }
    }
}

/// A parsed scenario.
pub struct D2dScenario {
    config: ScenarioConfig,
}

/// The metrics of one finished run.
pub struct D2dReport {
    report: MetricsReport,
}

/// Run-wide counters of a report.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct D2dSummary {
    pub tti_count: u64,
    pub seed: u64,
    pub offered_packets: u64,
    pub delivered_packets: u64,
    pub lost_packets: u64,
    pub in_flight_packets: u64,
    /// NaN when nothing was delivered.
    pub mean_latency_ttis: f64,
    pub max_latency_ttis: u64,
    pub rbs_dl: u64,
    pub rbs_ul: u64,
    pub rbs_sl: u64,
    pub sl_cqi_reports: u64,
    pub mode_switches: u64,
    pub mode_switch_losses: u64,
    pub harq_multicast_violations: u64,
    pub rb_conservation_violations: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

type Failure = (D2dStatus, String);

fn status_of(e: &Error) -> D2dStatus {
    match e {
        Error::Io { .. } => D2dStatus::Io,
        e if e.is_config_error() => D2dStatus::Config,
        _ => D2dStatus::Runtime,
    }
}

fn fail(e: Error) -> Failure {
    (status_of(&e), e.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> D2dStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => D2dStatus::Ok,
        Ok(Err((status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_last_error(format!("internal error: {what}"));
            D2dStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    (D2dStatus::NullArgument, format!("`{name}` is null"))
}

/// # Safety
/// `p` is null or points to a NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (D2dStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

/// # Safety
/// `p` is null or valid for writes of `T`.
unsafe fn write_out<T>(p: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    p.write(value);
    Ok(())
}

/// Message describing the last failure on this thread, or null after a
/// successful call. The string stays valid until the next call into the
/// library on the same thread.
#[no_mangle]
pub extern "C" fn d2d_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn d2d_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses scenario text. On success `*out` receives a handle to release with
/// [`d2d_scenario_free`].
///
/// # Safety
/// `text` is a NUL-terminated string; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn d2d_scenario_parse(text: *const c_char, out: *mut *mut D2dScenario) -> D2dStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let config = parse_scenario(text).map_err(|e| fail(e.into()))?;
        write_out(out, Box::into_raw(Box::new(D2dScenario { config })), "out")
    })
}

/// Reads and parses a scenario file. A relative CQI table path inside it is
/// taken relative to the file's directory.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn d2d_scenario_load(path: *const c_char, out: *mut *mut D2dScenario) -> D2dStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let config = load_scenario(Path::new(path)).map_err(fail)?;
        write_out(out, Box::into_raw(Box::new(D2dScenario { config })), "out")
    })
}

/// Replaces the scenario's seed.
///
/// # Safety
/// `scenario` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2d_scenario_set_seed(scenario: *mut D2dScenario, seed: u64) -> D2dStatus {
    guard(|| {
        let s = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        s.config.sim.seed = seed;
        Ok(())
    })
}

/// Replaces the number of TTIs to simulate.
///
/// # Safety
/// `scenario` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2d_scenario_set_tti_count(scenario: *mut D2dScenario, tti_count: u64) -> D2dStatus {
    guard(|| {
        let s = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        s.config.sim.tti_count = tti_count;
        Ok(())
    })
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
/// `scenario` is null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn d2d_scenario_free(scenario: *mut D2dScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

unsafe fn run_with(scenario: *const D2dScenario, options: RunOptions, out: *mut *mut D2dReport) -> D2dStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let report = engine::run(&s.config, options).map_err(fail)?;
        write_out(out, Box::into_raw(Box::new(D2dReport { report })), "out")
    })
}

/// Runs the scenario. On success `*out` receives a report to release with
/// [`d2d_report_free`].
///
/// # Safety
/// `scenario` is a live handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn d2d_run(scenario: *const D2dScenario, out: *mut *mut D2dReport) -> D2dStatus {
    run_with(scenario, RunOptions::default(), out)
}

/// Runs the scenario with every peered pair pinned to `mode`, a
/// [`D2dMode`] value.
///
/// # Safety
/// `scenario` is a live handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn d2d_run_forced(
    scenario: *const D2dScenario,
    mode: u32,
    out: *mut *mut D2dReport,
) -> D2dStatus {
    let forced = match mode {
        0 => Mode::Dm,
        1 => Mode::Im,
        other => {
            return guard(|| Err((D2dStatus::InvalidArgument, format!("mode {other} is not a D2dMode"))));
        }
    };
    run_with(
        scenario,
        RunOptions {
            forced_mode: Some(forced),
            ..RunOptions::default()
        },
        out,
    )
}

/// Copies the run-wide counters of `report` into `*out`.
///
/// # Safety
/// `report` is a live handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn d2d_report_summary(report: *const D2dReport, out: *mut D2dSummary) -> D2dStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let s = &r.report.summary;
        let summary = D2dSummary {
            tti_count: s.tti_count,
            seed: s.seed,
            offered_packets: s.offered_packets,
            delivered_packets: s.delivered_packets,
            lost_packets: s.lost_packets,
            in_flight_packets: s.in_flight_packets,
            mean_latency_ttis: s.mean_latency_ttis.unwrap_or(f64::NAN),
            max_latency_ttis: s.max_latency_ttis,
            rbs_dl: s.rbs_used[0],
            rbs_ul: s.rbs_used[1],
            rbs_sl: s.rbs_used[2],
            sl_cqi_reports: s.sl_cqi_reports,
            mode_switches: s.mode_switches,
            mode_switch_losses: s.mode_switch_losses,
            harq_multicast_violations: s.harq_multicast_violations,
            rb_conservation_violations: s.rb_conservation_violations,
        };
        write_out(out, summary, "out")
    })
}

/// Number of flow legs in the report.
///
/// # Safety
/// `report` is a live handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn d2d_report_flow_count(report: *const D2dReport, out: *mut usize) -> D2dStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        write_out(out, r.report.flows.len(), "out")
    })
}

/// Writes the report's CSV files into `dir`, creating it if needed.
///
/// # Safety
/// `report` is a live handle; `dir` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn d2d_report_write(report: *const D2dReport, dir: *const c_char) -> D2dStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let dir = str_arg(dir, "dir")?;
        r.report.write_to_dir(Path::new(dir), "").map_err(fail)?;
        Ok(())
    })
}

/// Releases a report. Null is ignored.
///
/// # Safety
/// `report` is null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn d2d_report_free(report: *mut D2dReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// The BestCqi rule: DM when the sidelink CQI is at least the uplink CQI.
/// Both CQIs must lie in 0..=15.
///
/// # Safety
/// `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn d2d_best_cqi_decide(ul_cqi: u8, sl_cqi: u8, out: *mut D2dMode) -> D2dStatus {
    guard(|| {
        if ul_cqi > MAX_CQI || sl_cqi > MAX_CQI {
            return Err((
                D2dStatus::InvalidArgument,
                format!("CQIs must be at most {MAX_CQI}, got {ul_cqi} and {sl_cqi}"),
            ));
        }
        write_out(out, best_cqi_decide(ul_cqi, sl_cqi).into(), "out")
    })
}

/// Transport block size in bits for `num_rbs` RBs at `cqi` under the built-in
/// CQI table.
///
/// # Safety
/// `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn d2d_amc_tbs(cqi: u8, num_rbs: u32, rb_capacity_re: u32, out: *mut u32) -> D2dStatus {
    guard(|| {
        let bits = amc_tbs(cqi, num_rbs, rb_capacity_re, &CqiTable::default())
            .map_err(|e| (D2dStatus::InvalidArgument, e.to_string()))?;
        write_out(out, bits, "out")
    })
}
