//! C ABI over the carpoolflow core.
//!
//! Objects cross the boundary as opaque handles created by `*_load` or
//! `cpf_simplify` and released by the matching `*_free`. Every fallible
//! call returns a [`CpfStatus`]; on failure the message is available from
//! [`cpf_last_error_message`] on the same thread until the next call.
//! Unavailable floating point results are reported as NaN.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use carpoolflow::flow::{driver_flow, wait_times, weekly_waits, FlowProfile};
use carpoolflow::geo::Trace;
use carpoolflow::io::{self as cio, IoError};
use carpoolflow::matchprob::{match_probability_mc, SubCubeModel};
use carpoolflow::network::{CarpoolLine, CarpoolNetwork};
use carpoolflow::participation::participation_rate;
use carpoolflow::simplify::{compression_rate, LineMatcher, SimplifiedTrace};
use carpoolflow::time::{parse_offset, DailyWindow, TimeGrid};
use carpoolflow::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    IoError = 4,
    RuntimeError = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Meeting points and directed edges.
pub struct CpfNetwork(CarpoolNetwork);

/// GPS traces loaded from CSV.
pub struct CpfTraces(Vec<Trace>);

/// Traces reduced to their meeting point passes along one line.
pub struct CpfSimplified {
    line: CarpoolLine,
    traces: Vec<SimplifiedTrace>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpfWeeklyComparison {
    pub door_wait_minutes: f64,
    pub meeting_wait_minutes: f64,
    /// `(meeting - door) / door` as a fraction.
    pub change: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure {
    status: CpfStatus,
    message: String,
}

impl Failure {
    fn new(status: CpfStatus, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(IoError::Io { .. }) => CpfStatus::IoError,
            Error::Usage(_) => CpfStatus::InvalidArgument,
            e if e.is_parse() => CpfStatus::ParseError,
            _ => CpfStatus::RuntimeError,
        };
        Failure::new(status, format!("{}: {e}", e.code()))
    }
}

macro_rules! impl_from_core {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}

impl_from_core!(
    IoError,
    carpoolflow::time::TimeError,
    carpoolflow::network::NetworkError,
    carpoolflow::simplify::SimplifyError,
    carpoolflow::flow::FlowError,
    carpoolflow::matchprob::MatchProbError,
    carpoolflow::participation::ParticipationError
);

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CpfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            CpfStatus::Ok
        }
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(_) => {
            set_last_error("internal panic");
            CpfStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(CpfStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(CpfStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::new(CpfStatus::NullPointer, format!("{name} is null")))
}

fn out_ptr<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(CpfStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn grid(
    window: *const c_char,
    utc_offset: *const c_char,
    bin_minutes: u32,
) -> Result<TimeGrid, Failure> {
    Ok(TimeGrid::with_minutes(window_arg(window, utc_offset)?, bin_minutes)?)
}

unsafe fn window_arg(window: *const c_char, utc_offset: *const c_char) -> Result<DailyWindow, Failure> {
    let w: DailyWindow = text(window, "window")?.parse()?;
    if utc_offset.is_null() {
        return Ok(w);
    }
    Ok(w.with_offset(parse_offset(text(utc_offset, "utc_offset")?)?))
}

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cpf_version() -> *const c_char {
    VERSION.as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn cpf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a network from a nodes CSV and an edges CSV.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cpf_network_load(
    nodes_path: *const c_char,
    edges_path: *const c_char,
    out: *mut *mut CpfNetwork,
) -> CpfStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let net = cio::read_network(
            Path::new(text(nodes_path, "nodes_path")?),
            Path::new(text(edges_path, "edges_path")?),
        )?;
        *out = Box::into_raw(Box::new(CpfNetwork(net)));
        Ok(())
    })
}

/// # Safety
/// `network` must come from [`cpf_network_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cpf_network_free(network: *mut CpfNetwork) {
    if !network.is_null() {
        drop(Box::from_raw(network));
    }
}

/// Number of meeting points; 0 for a null handle.
///
/// # Safety
/// `network` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cpf_network_node_count(network: *const CpfNetwork) -> usize {
    network.as_ref().map_or(0, |n| n.0.len())
}

/// Loads a trace CSV. Malformed rows and invalid traces are skipped; the
/// number skipped is written to `rejected` when it is not null.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cpf_traces_load(
    path: *const c_char,
    out: *mut *mut CpfTraces,
    rejected: *mut usize,
) -> CpfStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let load = cio::read_traces(Path::new(text(path, "path")?))?;
        if !rejected.is_null() {
            *rejected = load.issues.len();
        }
        *out = Box::into_raw(Box::new(CpfTraces(load.traces)));
        Ok(())
    })
}

/// # Safety
/// `traces` must come from [`cpf_traces_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cpf_traces_free(traces: *mut CpfTraces) {
    if !traces.is_null() {
        drop(Box::from_raw(traces));
    }
}

/// # Safety
/// `traces` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cpf_traces_len(traces: *const CpfTraces) -> usize {
    traces.as_ref().map_or(0, |t| t.0.len())
}

/// Simplifies every trace onto `line` (e.g. `"B>V>S"`). Arrivals must fall
/// in `window` (`"HH:MM-HH:MM"`, local to `utc_offset`, null for UTC).
///
/// # Safety
/// Handles must be live; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cpf_simplify(
    network: *const CpfNetwork,
    traces: *const CpfTraces,
    line: *const c_char,
    window: *const c_char,
    utc_offset: *const c_char,
    radius_m: f64,
    out: *mut *mut CpfSimplified,
) -> CpfStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let network = handle(network, "network")?;
        let traces = handle(traces, "traces")?;
        let line: CarpoolLine = text(line, "line")?.parse()?;
        let matcher = LineMatcher::new(&network.0, &line, radius_m, window_arg(window, utc_offset)?)?;
        let simplified = matcher.simplify_all(&traces.0);
        *out = Box::into_raw(Box::new(CpfSimplified { line, traces: simplified }));
        Ok(())
    })
}

/// # Safety
/// `simplified` must come from [`cpf_simplify`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cpf_simplified_free(simplified: *mut CpfSimplified) {
    if !simplified.is_null() {
        drop(Box::from_raw(simplified));
    }
}

/// # Safety
/// `simplified` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cpf_simplified_len(simplified: *const CpfSimplified) -> usize {
    simplified.as_ref().map_or(0, |s| s.traces.len())
}

/// Mean compression rate over the simplified traces; NaN when empty.
///
/// # Safety
/// `simplified` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cpf_simplified_mean_compression(simplified: *const CpfSimplified) -> f64 {
    match simplified.as_ref() {
        Some(s) if !s.traces.is_empty() => {
            s.traces.iter().map(compression_rate).sum::<f64>() / s.traces.len() as f64
        }
        _ => f64::NAN,
    }
}

/// Writes the simplified-trace CSV to `path`.
///
/// # Safety
/// `simplified` must be live; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cpf_simplified_write_csv(
    simplified: *const CpfSimplified,
    path: *const c_char,
) -> CpfStatus {
    guard(|| {
        let s = handle(simplified, "simplified")?;
        cio::write_atomic(Path::new(text(path, "path")?), &cio::simplified_csv(&s.traces))?;
        Ok(())
    })
}

/// Drivers per bin per day at the line's first meeting point. The number
/// of bins is written to `len_out`; when `capacity` is smaller the call
/// returns `BufferTooSmall` and writes nothing else, so a first call with
/// `capacity = 0` sizes the buffer.
///
/// # Safety
/// `counts_out` must hold `capacity` doubles (may be null when 0).
#[no_mangle]
pub unsafe extern "C" fn cpf_driver_flow(
    simplified: *const CpfSimplified,
    window: *const c_char,
    utc_offset: *const c_char,
    bin_minutes: u32,
    day_count: u32,
    counts_out: *mut f64,
    capacity: usize,
    len_out: *mut usize,
) -> CpfStatus {
    guard(|| {
        out_ptr(len_out, "len_out")?;
        let s = handle(simplified, "simplified")?;
        let flow = driver_flow(&s.traces, &s.line, &grid(window, utc_offset, bin_minutes)?, day_count)?;
        *len_out = flow.counts.len();
        if capacity < flow.counts.len() {
            return Err(Failure::new(
                CpfStatus::BufferTooSmall,
                format!("need room for {} bins", flow.counts.len()),
            ));
        }
        out_ptr(counts_out, "counts_out")?;
        std::slice::from_raw_parts_mut(counts_out, flow.counts.len()).copy_from_slice(&flow.counts);
        Ok(())
    })
}

/// Predicted waits `bin_minutes / count`, NaN where a count is zero.
///
/// # Safety
/// `counts` and `waits_out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cpf_wait_times(
    counts: *const f64,
    len: usize,
    bin_minutes: u32,
    waits_out: *mut f64,
) -> CpfStatus {
    guard(|| {
        if len == 0 {
            return Ok(());
        }
        out_ptr(waits_out, "waits_out")?;
        if counts.is_null() {
            return Err(Failure::new(CpfStatus::NullPointer, "counts is null"));
        }
        let counts = std::slice::from_raw_parts(counts, len).to_vec();
        let span_s = u64::from(bin_minutes) * 60 * len as u64;
        let span_s = u32::try_from(span_s)
            .map_err(|_| Failure::new(CpfStatus::InvalidArgument, "bins exceed one day"))?;
        let window = DailyWindow::new(0, span_s, parse_offset("Z")?)
            .map_err(|e| Failure::new(CpfStatus::InvalidArgument, e.to_string()))?;
        let grid = TimeGrid::with_minutes(window, bin_minutes)?;
        let flow = FlowProfile::new(grid, "", counts, 1)?;
        let out = std::slice::from_raw_parts_mut(waits_out, len);
        for (o, w) in out.iter_mut().zip(wait_times(&flow).waits) {
            *o = w.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Monte Carlo estimate of the door-to-door match probability over `n`
/// sub-cubes.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cpf_match_probability_mc(
    n: u64,
    samples: u64,
    seed: u64,
    out: *mut f64,
) -> CpfStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = match_probability_mc(&SubCubeModel::new(n, samples, seed)?);
        Ok(())
    })
}

/// Geolocated drivers over the route-inferred driver population.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cpf_participation_rate(n_tilde: f64, n0: f64, out: *mut f64) -> CpfStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = participation_rate(n_tilde, n0)?;
        Ok(())
    })
}

/// Waits over a window from weekly door-to-door and meeting point counts.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cpf_weekly_comparison(
    door_count: f64,
    meeting_count: f64,
    window_minutes: f64,
    operating_days: u32,
    out: *mut CpfWeeklyComparison,
) -> CpfStatus {
    guard(|| {
        out_ptr(out, "out")?;
        if window_minutes.is_nan()
            || window_minutes <= 0.0
            || operating_days == 0
            || door_count < 0.0
            || meeting_count < 0.0
        {
            return Err(Failure::new(CpfStatus::InvalidArgument, "counts, window and days must be positive"));
        }
        let c = weekly_waits(door_count, meeting_count, window_minutes, operating_days);
        *out = CpfWeeklyComparison {
            door_wait_minutes: c.door_wait.unwrap_or(f64::NAN),
            meeting_wait_minutes: c.meeting_wait.unwrap_or(f64::NAN),
            change: c.change.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}
