//! C ABI for byzsim.
//!
//! Conventions: every fallible call returns a [`ByzsimStatus`]; on failure
//! [`byzsim_last_error_message`] describes the error for the calling thread.
//! Handles are opaque, created by `*_from_json` / `byzsim_run` and released
//! with the matching `*_free`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use byzsim::aggregators::{aggregate, AggregatorSpec};
use byzsim::harness::export::write_rounds;
use byzsim::harness::{run_with_seed, verify, RunConfig, RunTrace};
use byzsim::{Error, Vector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByzsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed JSON or an invalid configuration field.
    Config = 3,
    InvalidArgument = 4,
    Io = 5,
    /// A Rust panic was caught; the library state is still usable.
    Panic = 6,
}

/// Opaque run configuration.
pub struct ByzsimConfig(RunConfig);

/// Opaque run result.
pub struct ByzsimTrace(RunTrace);

/// One round of a trace.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ByzsimRound {
    pub t: u64,
    pub gap: f64,
    pub grad_norm_sq: f64,
    pub byz_fraction: f64,
    pub cost: u64,
    pub level: u32,
    pub failsafe: bool,
    pub dynamic_round: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> ByzsimStatus {
    match err {
        Error::Io(_) | Error::Csv(_) => ByzsimStatus::Io,
        e if e.is_config() => ByzsimStatus::Config,
        _ => ByzsimStatus::InvalidArgument,
    }
}

struct Fail(ByzsimStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(ByzsimStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ByzsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ByzsimStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            ByzsimStatus::Panic
        }
    }
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(ByzsimStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn byzsim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses and validates a JSON run config.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn byzsim_config_from_json(json: *const c_char, out: *mut *mut ByzsimConfig) -> ByzsimStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(json, "json")?;
        let cfg = RunConfig::from_json(text)?;
        *out = Box::into_raw(Box::new(ByzsimConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from [`byzsim_config_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn byzsim_config_free(cfg: *mut ByzsimConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the config with its own seed.
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn byzsim_run(cfg: *const ByzsimConfig, out: *mut *mut ByzsimTrace) -> ByzsimStatus {
    match cfg.as_ref() {
        Some(c) => byzsim_run_seeded(cfg, c.0.seed, out),
        None => guard(|| Err(null("cfg"))),
    }
}

/// Runs the config with an explicit seed.
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn byzsim_run_seeded(
    cfg: *const ByzsimConfig,
    seed: u64,
    out: *mut *mut ByzsimTrace,
) -> ByzsimStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let trace = run_with_seed(&cfg.0, seed)?;
        *out = Box::into_raw(Box::new(ByzsimTrace(trace)));
        Ok(())
    })
}

/// Number of rounds, 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn byzsim_trace_len(trace: *const ByzsimTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.rounds.len())
}

/// Copies round `index` (0-based) into `out`.
///
/// # Safety
/// `trace` must be a live trace handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn byzsim_trace_round(
    trace: *const ByzsimTrace,
    index: usize,
    out: *mut ByzsimRound,
) -> ByzsimStatus {
    guard(|| {
        let trace = trace.as_ref().ok_or_else(|| null("trace"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = trace.0.rounds.get(index).ok_or_else(|| {
            Fail(
                ByzsimStatus::InvalidArgument,
                format!("round index {index} out of range ({} rounds)", trace.0.rounds.len()),
            )
        })?;
        *out = ByzsimRound {
            t: r.t as u64,
            gap: r.gap,
            grad_norm_sq: r.grad_norm_sq,
            byz_fraction: r.byz_fraction,
            cost: r.cost,
            level: r.level,
            failsafe: r.failsafe,
            dynamic_round: r.dynamic_round,
        };
        Ok(())
    })
}

/// Optimality gap at the final iterate.
///
/// # Safety
/// `trace` must be a live trace handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn byzsim_trace_final_gap(trace: *const ByzsimTrace, out: *mut f64) -> ByzsimStatus {
    guard(|| {
        let trace = trace.as_ref().ok_or_else(|| null("trace"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = trace.0.final_gap;
        Ok(())
    })
}

/// Writes the per-round CSV (run id 0) to `path`.
///
/// # Safety
/// `trace` must be a live trace handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn byzsim_trace_write_csv(trace: *const ByzsimTrace, path: *const c_char) -> ByzsimStatus {
    guard(|| {
        let trace = trace.as_ref().ok_or_else(|| null("trace"))?;
        let path = read_str(path, "path")?;
        let file = std::fs::File::create(path).map_err(Error::from)?;
        write_rounds(std::io::BufWriter::new(file), &[(0, &trace.0)])?;
        Ok(())
    })
}

/// # Safety
/// `trace` must be null or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn byzsim_trace_free(trace: *mut ByzsimTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Aggregates `m` row-major messages of dimension `dim` with the rule
/// described by `spec_json` (e.g. `{"kind":"cwtm","trim_k":1}`), writing
/// `dim` values to `out`.
///
/// # Safety
/// `msgs` must hold `m * dim` doubles and `out` room for `dim`.
#[no_mangle]
pub unsafe extern "C" fn byzsim_aggregate(
    spec_json: *const c_char,
    msgs: *const f64,
    m: usize,
    dim: usize,
    out: *mut f64,
) -> ByzsimStatus {
    guard(|| {
        let text = read_str(spec_json, "spec_json")?;
        if msgs.is_null() {
            return Err(null("msgs"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if m == 0 || dim == 0 {
            return Err(Fail(ByzsimStatus::InvalidArgument, "m and dim must be positive".into()));
        }
        let len = m
            .checked_mul(dim)
            .ok_or_else(|| Fail(ByzsimStatus::InvalidArgument, "m * dim overflows".into()))?;
        let spec: AggregatorSpec = serde_json::from_str(text).map_err(Error::from)?;
        spec.validate()?;
        let data = std::slice::from_raw_parts(msgs, len);
        let vectors = data
            .chunks_exact(dim)
            .map(|row| Vector::new(row.to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        let agg = aggregate(&spec, &vectors)?;
        std::slice::from_raw_parts_mut(out, dim).copy_from_slice(agg.as_slice());
        Ok(())
    })
}

/// Runs a property suite; `passed` receives whether every check passed.
///
/// # Safety
/// `name` must be a NUL-terminated string; `passed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn byzsim_verify_suite(name: *const c_char, passed: *mut bool) -> ByzsimStatus {
    guard(|| {
        let name = read_str(name, "name")?;
        let passed = passed.as_mut().ok_or_else(|| null("passed"))?;
        *passed = verify(name)?.passed();
        Ok(())
    })
}
