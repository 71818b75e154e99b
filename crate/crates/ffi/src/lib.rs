//! C ABI for clairsim.
//!
//! Every fallible function returns a [`ClairsimStatus`] and writes its result
//! through an out-pointer. On failure the message is available from
//! [`clairsim_last_error_message`] on the same thread. Handles are opaque and
//! must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use clairsim::access::{build_access_streams, AccessStream, PartitionSpec, Seed};
use clairsim::analysis::{self, AccessDistributionParams};
use clairsim::perfmodel::ThroughputCurve;
use clairsim::{Error, PolicySpec, RunConfig, SimOptions, SimResult};

/// Result codes. Values 2-4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClairsimStatus {
    Ok = 0,
    Io = 1,
    Config = 2,
    Infeasible = 3,
    Invariant = 4,
    NullPointer = 5,
    Panic = 6,
}

/// A run configuration.
pub struct ClairsimRunConfig {
    inner: RunConfig,
}

/// The outcome of one simulation.
pub struct ClairsimSimResult {
    inner: SimResult,
}

/// Per-worker access streams.
pub struct ClairsimAccessStreams {
    inner: Vec<AccessStream>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ClairsimStatus {
    match e {
        Error::Config(_) | Error::Json(_) => ClairsimStatus::Config,
        Error::Infeasible(_) => ClairsimStatus::Infeasible,
        Error::Invariant(_) => ClairsimStatus::Invariant,
        Error::Io(_) | Error::Csv(_) => ClairsimStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ClairsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ClairsimStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            ClairsimStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("panic inside clairsim".into());
            ClairsimStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::config(format!("{what} is not valid UTF-8"))))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn clairsim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from a clairsim function returning `char *`, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn clairsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a JSON run configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clairsim_run_config_from_json(
    json: *const c_char,
    out: *mut *mut ClairsimRunConfig,
) -> ClairsimStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let inner = RunConfig::from_json(text)?;
        write_out(out, Box::into_raw(Box::new(ClairsimRunConfig { inner })), "out")
    })
}

/// Configuration for a named preset and policy (e.g. "nopfs", "staging-buffer:ram").
///
/// # Safety
/// `preset` and `policy` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clairsim_run_config_from_preset(
    preset: *const c_char,
    policy: *const c_char,
    seed: u64,
    out: *mut *mut ClairsimRunConfig,
) -> ClairsimStatus {
    guard(|| {
        let preset = str_arg(preset, "preset")?;
        let policy: PolicySpec = str_arg(policy, "policy")?.parse()?;
        clairsim::simulator::preset(preset)?;
        let inner = RunConfig::from_preset(preset, policy, seed);
        write_out(out, Box::into_raw(Box::new(ClairsimRunConfig { inner })), "out")
    })
}

/// Shrink dataset and capacities by `scale` (multiplies any existing factor).
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn clairsim_run_config_set_scale(config: *mut ClairsimRunConfig, scale: f64) -> ClairsimStatus {
    guard(|| {
        let c = config.as_mut().ok_or(Fail::Null("config"))?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::config(format!("scale must be positive, got {scale}")).into());
        }
        c.inner.scale *= scale;
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn clairsim_run_config_set_epochs(config: *mut ClairsimRunConfig, epochs: usize) -> ClairsimStatus {
    guard(|| {
        let c = config.as_mut().ok_or(Fail::Null("config"))?;
        if epochs == 0 {
            return Err(Error::config("epochs must be at least 1").into());
        }
        c.inner.epochs = Some(epochs);
        Ok(())
    })
}

/// Normalized configuration as JSON; free with `clairsim_string_free`.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clairsim_run_config_to_json(
    config: *const ClairsimRunConfig,
    out: *mut *mut c_char,
) -> ClairsimStatus {
    guard(|| {
        let c = handle(config, "config")?;
        let json = c.inner.normalize()?.to_json();
        write_out(out, into_c_string(json), "out")
    })
}

/// # Safety
/// `config` must come from this library and not be used afterwards, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn clairsim_run_config_free(config: *mut ClairsimRunConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Validate, build streams and the policy, and simulate.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clairsim_simulate(
    config: *const ClairsimRunConfig,
    out: *mut *mut ClairsimSimResult,
) -> ClairsimStatus {
    guard(|| {
        let c = handle(config, "config")?;
        let inner = c.inner.prepare()?.simulate(SimOptions::default())?;
        write_out(out, Box::into_raw(Box::new(ClairsimSimResult { inner })), "out")
    })
}

/// # Safety
/// `result` must be a live handle or NULL (returns NaN).
#[no_mangle]
pub unsafe extern "C" fn clairsim_result_total_time_s(result: *const ClairsimSimResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.total_time_s)
}

/// Stall time summed over workers.
///
/// # Safety
/// `result` must be a live handle or NULL (returns NaN).
#[no_mangle]
pub unsafe extern "C" fn clairsim_result_stall_time_s(result: *const ClairsimSimResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.total_stall_s())
}

/// # Safety
/// `result` must be a live handle or NULL (returns NaN).
#[no_mangle]
pub unsafe extern "C" fn clairsim_result_pfs_total_mb(result: *const ClairsimSimResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.pfs_total_mb)
}

/// # Safety
/// `result` must be a live handle or NULL (returns NaN).
#[no_mangle]
pub unsafe extern "C" fn clairsim_result_coverage(result: *const ClairsimSimResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.coverage)
}

/// # Safety
/// `result` must be a live handle or NULL (returns false).
#[no_mangle]
pub unsafe extern "C" fn clairsim_result_order_modified(result: *const ClairsimSimResult) -> bool {
    result.as_ref().is_some_and(|r| r.inner.order_modified)
}

/// Full summary as JSON; free with `clairsim_string_free`.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clairsim_result_to_json(
    result: *const ClairsimSimResult,
    out: *mut *mut c_char,
) -> ClairsimStatus {
    guard(|| {
        let r = handle(result, "result")?;
        let json = serde_json::to_string_pretty(&r.inner).map_err(Error::from)?;
        write_out(out, into_c_string(json), "out")
    })
}

/// # Safety
/// `result` must come from this library and not be used afterwards, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn clairsim_result_free(result: *mut ClairsimSimResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Generate the access streams of every worker.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clairsim_access_streams_new(
    seed: u64,
    samples: usize,
    workers: usize,
    global_batch: usize,
    epochs: usize,
    drop_last: bool,
    out: *mut *mut ClairsimAccessStreams,
) -> ClairsimStatus {
    guard(|| {
        let part = PartitionSpec { workers, global_batch, epochs, drop_last };
        let inner = build_access_streams(Seed(seed), samples, &part)?;
        write_out(out, Box::into_raw(Box::new(ClairsimAccessStreams { inner })), "out")
    })
}

/// Number of entries in `worker`'s stream.
///
/// # Safety
/// `streams` must be a live handle; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clairsim_access_streams_len(
    streams: *const ClairsimAccessStreams,
    worker: usize,
    len: *mut usize,
) -> ClairsimStatus {
    guard(|| {
        let s = handle(streams, "streams")?;
        let stream = s.inner.get(worker).ok_or_else(|| Error::config(format!("no worker {worker}")))?;
        write_out(len, stream.entries.len(), "len")
    })
}

/// Copy up to `capacity` sample indices of `worker`'s stream into `buffer`
/// and report how many were written.
///
/// # Safety
/// `streams` must be a live handle; `buffer` must hold `capacity` values;
/// `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clairsim_access_streams_copy(
    streams: *const ClairsimAccessStreams,
    worker: usize,
    buffer: *mut u32,
    capacity: usize,
    written: *mut usize,
) -> ClairsimStatus {
    guard(|| {
        let s = handle(streams, "streams")?;
        let stream = s.inner.get(worker).ok_or_else(|| Error::config(format!("no worker {worker}")))?;
        let n = stream.entries.len().min(capacity);
        if n > 0 {
            if buffer.is_null() {
                return Err(Fail::Null("buffer"));
            }
            ptr::copy_nonoverlapping(stream.entries.as_ptr(), buffer, n);
        }
        write_out(written, n, "written")
    })
}

/// # Safety
/// `streams` must come from this library and not be used afterwards, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn clairsim_access_streams_free(streams: *mut ClairsimAccessStreams) {
    if !streams.is_null() {
        drop(Box::from_raw(streams));
    }
}

fn params(workers: usize, epochs: usize, samples: usize, delta: f64) -> Result<AccessDistributionParams, Fail> {
    let p = AccessDistributionParams { workers, epochs, samples, delta };
    p.validate()?;
    Ok(p)
}

/// Probability that one worker reads a given sample at least `(1+delta)E/N` times.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clairsim_prob_exceeds(workers: usize, epochs: usize, delta: f64, out: *mut f64) -> ClairsimStatus {
    guard(|| {
        let p = params(workers, epochs, 1, delta)?;
        write_out(out, analysis::prob_exceeds(&p), "out")
    })
}

/// Expected number of samples one worker reads at least `(1+delta)E/N` times.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clairsim_expected_hot_samples(
    workers: usize,
    epochs: usize,
    samples: usize,
    delta: f64,
    out: *mut f64,
) -> ClairsimStatus {
    guard(|| {
        let p = params(workers, epochs, samples, delta)?;
        write_out(out, analysis::expected_hot_samples(&p), "out")
    })
}

/// Piecewise-linear throughput curve lookup, clamped outside the knots.
///
/// # Safety
/// `xs` and `ys` must each hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clairsim_interp(
    xs: *const f64,
    ys: *const f64,
    len: usize,
    x: f64,
    out: *mut f64,
) -> ClairsimStatus {
    guard(|| {
        if len == 0 {
            return Err(Error::config("curve needs at least one point").into());
        }
        if xs.is_null() || ys.is_null() {
            return Err(Fail::Null("xs/ys"));
        }
        let xs = std::slice::from_raw_parts(xs, len);
        let ys = std::slice::from_raw_parts(ys, len);
        let curve = ThroughputCurve::new(xs.iter().copied().zip(ys.iter().copied()).collect())?;
        write_out(out, curve.interp(x), "out")
    })
}
