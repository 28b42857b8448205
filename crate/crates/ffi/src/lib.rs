//! C ABI over `tuc-core`.
//!
//! Every function returns a [`TucStatus`]. On failure a message is kept per
//! thread and can be read with [`tuc_last_error`]. Handles are opaque and
//! must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use tuc_core::control::Controller;
use tuc_core::dynamics::{dependent_controls, JunctionControls};
use tuc_core::lqr::webster_cycle;
use tuc_core::net::{build_grid, NetworkModel};
use tuc_core::run::{run_scenario, RunOutput};
use tuc_core::scenario::ScenarioConfig;
use tuc_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TucStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad input: config, network, weights, controls or arguments.
    InvalidInput = 3,
    /// The Riccati solver did not converge.
    NoConvergence = 4,
    Io = 5,
    /// Output buffer too small; the required length is still reported.
    BufferTooSmall = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
    Internal = 8,
}

/// Grid network.
pub struct TucNetwork(NetworkModel);

/// Synthesized feedback controller.
pub struct TucSynthesis(Controller);

/// Completed simulation run.
pub struct TucRun {
    output: RunOutput,
    summary: CString,
}

/// Red durations and second-stage green of one junction.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TucDependentControls {
    pub red_first: f64,
    pub red_second: f64,
    pub green_second: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> TucStatus {
    match e {
        Error::NoConvergence { .. } => TucStatus::NoConvergence,
        Error::Io(_) => TucStatus::Io,
        e if e.is_validation() => TucStatus::InvalidInput,
        Error::Infeasible { .. }
        | Error::NegativeRemainingCapacity { .. }
        | Error::NotAnApproach { .. }
        | Error::Unreachable { .. } => TucStatus::InvalidInput,
        _ => TucStatus::Internal,
    }
}

/// Run `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (TucStatus, String)>) -> TucStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TucStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            TucStatus::Panic
        }
    }
}

fn core(e: Error) -> (TucStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (TucStatus, String) {
    (TucStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (TucStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (TucStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), (TucStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn handle<'a, T>(h: *const T, what: &str) -> Result<&'a T, (TucStatus, String)> {
    h.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tuc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tuc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Webster cycle for lost time `lost_time_s` and load `load`, clamped to
/// `[c_min, c_max]`.
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn tuc_webster_cycle(
    lost_time_s: f64,
    load: f64,
    c_min: f64,
    c_max: f64,
    out: *mut f64,
) -> TucStatus {
    guard(|| {
        let c = webster_cycle(lost_time_s, load, c_min, c_max).map_err(core)?;
        write_out(out, c, "out")
    })
}

/// Red durations implied by green `g` and yellows `y1`, `y2` over `cycle`.
///
/// # Safety
/// `out` must be null or point to a writable `TucDependentControls`.
#[no_mangle]
pub unsafe extern "C" fn tuc_dependent_controls(
    g: f64,
    y1: f64,
    y2: f64,
    cycle: f64,
    out: *mut TucDependentControls,
) -> TucStatus {
    guard(|| {
        let c = JunctionControls {
            green: g,
            yellow_first: y1,
            yellow_second: y2,
        };
        let d = dependent_controls(&c, cycle).map_err(core)?;
        let value = TucDependentControls {
            red_first: d.red_first,
            red_second: d.red_second,
            green_second: d.green_second,
        };
        write_out(out, value, "out")
    })
}

/// Build a `rows` x `cols` grid with links of `link_length_m` and
/// saturation flow `saturation_flow_veh_h`.
///
/// # Safety
/// `out` must be null or point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn tuc_network_grid(
    rows: usize,
    cols: usize,
    link_length_m: f64,
    saturation_flow_veh_h: f64,
    out: *mut *mut TucNetwork,
) -> TucStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let net = build_grid(rows, cols, link_length_m, saturation_flow_veh_h / 3600.0).map_err(core)?;
        write_out(out, Box::into_raw(Box::new(TucNetwork(net))), "out")
    })
}

/// # Safety
/// `net` must be null or a live network handle; `junctions`, `links` and
/// `circuits` must each be null or writable.
#[no_mangle]
pub unsafe extern "C" fn tuc_network_counts(
    net: *const TucNetwork,
    junctions: *mut usize,
    links: *mut usize,
    circuits: *mut usize,
) -> TucStatus {
    guard(|| {
        let n = &handle(net, "net")?.0;
        write_out(junctions, n.junctions.len(), "junctions")?;
        write_out(links, n.links.len(), "links")?;
        write_out(circuits, n.circuits.len(), "circuits")
    })
}

/// # Safety
/// `net` must be null or a handle from `tuc_network_grid` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tuc_network_free(net: *mut TucNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Synthesize the controller of a scenario given as JSON.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` must be
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn tuc_synthesize(config_json: *const c_char, out: *mut *mut TucSynthesis) -> TucStatus {
    guard(|| {
        let text = read_str(config_json, "config_json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let scenario = ScenarioConfig::from_json(text)
            .and_then(|c| c.resolve())
            .map_err(core)?;
        let ctl = Controller::design(&scenario.network, scenario.controller).map_err(core)?;
        write_out(out, Box::into_raw(Box::new(TucSynthesis(ctl))), "out")
    })
}

/// Gain shape: `controls` rows by `states` columns.
///
/// # Safety
/// `syn` must be null or a live synthesis handle; `states` and `controls`
/// must each be null or writable.
#[no_mangle]
pub unsafe extern "C" fn tuc_synthesis_shape(
    syn: *const TucSynthesis,
    states: *mut usize,
    controls: *mut usize,
) -> TucStatus {
    guard(|| {
        let c = &handle(syn, "syn")?.0;
        write_out(states, c.state_links.len(), "states")?;
        write_out(controls, c.controls.len(), "controls")
    })
}

/// Copy the gain into `buf` row-major. `len` is the buffer length in
/// doubles; the required length is written to `needed` when non-null.
///
/// # Safety
/// `syn` must be null or a live synthesis handle; `buf` must be null or
/// point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tuc_synthesis_gain(
    syn: *const TucSynthesis,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> TucStatus {
    guard(|| {
        let gain = handle(syn, "syn")?.0.gain();
        let n = gain.len();
        if !needed.is_null() {
            needed.write(n);
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < n {
            return Err((TucStatus::BufferTooSmall, format!("gain needs {n} doubles, got {len}")));
        }
        let out = std::slice::from_raw_parts_mut(buf, n);
        for r in 0..gain.nrows() {
            for c in 0..gain.ncols() {
                out[r * gain.ncols() + c] = gain[(r, c)];
            }
        }
        Ok(())
    })
}

/// Riccati residual and closed-loop spectral radius.
///
/// # Safety
/// `syn` must be null or a live synthesis handle; `residual` and `radius`
/// must each be null or writable.
#[no_mangle]
pub unsafe extern "C" fn tuc_synthesis_quality(
    syn: *const TucSynthesis,
    residual: *mut f64,
    radius: *mut f64,
) -> TucStatus {
    guard(|| {
        let c = &handle(syn, "syn")?.0;
        write_out(residual, c.synthesis.residual, "residual")?;
        write_out(radius, c.closed_loop_radius, "radius")
    })
}

/// # Safety
/// `syn` must be null or a handle from `tuc_synthesize` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tuc_synthesis_free(syn: *mut TucSynthesis) {
    if !syn.is_null() {
        drop(Box::from_raw(syn));
    }
}

/// Run the closed loop for a scenario given as JSON.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` must be
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn tuc_run_from_json(config_json: *const c_char, out: *mut *mut TucRun) -> TucStatus {
    guard(|| {
        let text = read_str(config_json, "config_json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let scenario = ScenarioConfig::from_json(text)
            .and_then(|c| c.resolve())
            .map_err(core)?;
        let output = run_scenario(&scenario).map_err(core)?;
        let summary = CString::new(output.summary_json()).map_err(|e| (TucStatus::Internal, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(TucRun { output, summary })), "out")
    })
}

/// Summary of a run as JSON. The string is owned by the handle.
///
/// # Safety
/// `run` must be null or a live run handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn tuc_run_summary(run: *const TucRun, out: *mut *const c_char) -> TucStatus {
    guard(|| {
        let r = handle(run, "run")?;
        write_out(out, r.summary.as_ptr(), "out")
    })
}

/// Final running vehicles, cumulative ended trips and number of cycles.
///
/// # Safety
/// `run` must be null or a live run handle; the out pointers must each be
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn tuc_run_totals(
    run: *const TucRun,
    running: *mut u64,
    ended: *mut u64,
    cycles: *mut usize,
) -> TucStatus {
    guard(|| {
        let s = &handle(run, "run")?.output.summary;
        write_out(running, s.final_running, "running")?;
        write_out(ended, s.total_ended, "ended")?;
        write_out(cycles, s.cycles, "cycles")
    })
}

/// Write cycle_log.csv, trips.csv, circuits.csv and summary.json into `dir`.
///
/// # Safety
/// `run` must be null or a live run handle; `dir` must be null or a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tuc_run_write_outputs(run: *const TucRun, dir: *const c_char) -> TucStatus {
    guard(|| {
        let r = handle(run, "run")?;
        let dir = read_str(dir, "dir")?;
        r.output.write_to(Path::new(dir)).map_err(core)
    })
}

/// # Safety
/// `run` must be null or a handle from `tuc_run_from_json` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tuc_run_free(run: *mut TucRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
