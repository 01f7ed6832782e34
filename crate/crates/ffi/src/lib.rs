//! C ABI for the tempered Zig-Zag sampler.
//!
//! A sampler is an opaque handle built from a JSON run config. Every entry
//! point returns a [`TzzStatus`]; on failure the message is available from
//! [`tzz_last_error_message`] on the same thread. Panics are caught at the
//! boundary and reported as [`TzzStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tempered_zigzag::estimators::is_weight;
use tempered_zigzag::harness::run::ReplicateOutput;
use tempered_zigzag::harness::{build_problem, parse_config, run_replicate, Problem, RunConfig};
use tempered_zigzag::tempering::exit_rate_for;
use tempered_zigzag::{first_event_poly, Error, Mode, RateBound};

/// Result codes shared by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TzzStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    BoundViolation = 4,
    NonFinite = 5,
    InvalidArgument = 6,
    /// Skeleton or summary requested before a successful run.
    NotRun = 7,
    Io = 8,
    Internal = 99,
}

/// Mode codes written by [`tzz_skeleton_event`].
pub const TZZ_MODE_TEMPERING: i32 = 0;
pub const TZZ_MODE_TARGET: i32 = 1;
pub const TZZ_MODE_UNTEMPERED: i32 = 2;

/// Opaque sampler handle.
pub struct TzzSampler {
    config: RunConfig,
    problem: Problem,
    output: Option<ReplicateOutput>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> TzzStatus {
    match err {
        Error::Config { .. } | Error::Json(_) => TzzStatus::InvalidConfig,
        Error::BoundViolation { .. } => TzzStatus::BoundViolation,
        Error::NonFinite(_) => TzzStatus::NonFinite,
        Error::Io(_) => TzzStatus::Io,
        Error::RootIsolation(_) => TzzStatus::Internal,
        _ => TzzStatus::InvalidArgument,
    }
}

fn fail(status: TzzStatus, message: impl Into<String>) -> TzzStatus {
    set_error(message.into());
    status
}

/// Runs `f` with panics caught and errors recorded.
fn guard(f: impl FnOnce() -> Result<(), TzzStatus>) -> TzzStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TzzStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(TzzStatus::Internal, "panic inside tempered-zigzag"),
    }
}

fn lift<T>(r: tempered_zigzag::Result<T>) -> Result<T, TzzStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), TzzStatus> {
    if p.is_null() {
        Err(fail(TzzStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn sampler_ref<'a>(p: *const TzzSampler) -> Result<&'a TzzSampler, TzzStatus> {
    non_null(p, "sampler")?;
    Ok(&*p)
}

unsafe fn output_ref<'a>(p: *const TzzSampler) -> Result<&'a ReplicateOutput, TzzStatus> {
    sampler_ref(p)?
        .output
        .as_ref()
        .ok_or_else(|| fail(TzzStatus::NotRun, "sampler has not been run"))
}

/// Message for the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tzz_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses and validates a JSON run config and builds its model.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tzz_sampler_from_json(json: *const c_char, out: *mut *mut TzzSampler) -> TzzStatus {
    guard(|| {
        non_null(json, "json")?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| fail(TzzStatus::InvalidUtf8, e.to_string()))?;
        let config = lift(parse_config(text))?;
        let problem = lift(build_problem(&config))?;
        *out = Box::into_raw(Box::new(TzzSampler {
            config,
            problem,
            output: None,
        }));
        Ok(())
    })
}

/// Overrides the config seed before running.
///
/// # Safety
/// `sampler` must come from [`tzz_sampler_from_json`].
#[no_mangle]
pub unsafe extern "C" fn tzz_sampler_set_seed(sampler: *mut TzzSampler, seed: u64) -> TzzStatus {
    guard(|| {
        non_null(sampler, "sampler")?;
        (*sampler).config.seed = seed;
        Ok(())
    })
}

/// Runs replicate `replicate` of the configured chain, replacing any
/// previous result held by the handle.
///
/// # Safety
/// `sampler` must come from [`tzz_sampler_from_json`].
#[no_mangle]
pub unsafe extern "C" fn tzz_sampler_run(sampler: *mut TzzSampler, replicate: usize) -> TzzStatus {
    guard(|| {
        non_null(sampler, "sampler")?;
        let s = &mut *sampler;
        s.output = None;
        s.output = Some(lift(run_replicate(&s.config, &s.problem, replicate))?);
        Ok(())
    })
}

/// Number of records in the last skeleton, initial and final included.
///
/// # Safety
/// `sampler` must come from [`tzz_sampler_from_json`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tzz_skeleton_len(sampler: *const TzzSampler, out: *mut usize) -> TzzStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = output_ref(sampler)?.skeleton.events.len();
        Ok(())
    })
}

/// Position dimension of the model.
///
/// # Safety
/// `sampler` must come from [`tzz_sampler_from_json`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tzz_sampler_dim(sampler: *const TzzSampler, out: *mut usize) -> TzzStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = match &sampler_ref(sampler)?.problem {
            Problem::Smooth { target, .. } => target.dim(),
            Problem::SpikeSlab(spec) => spec.d,
        };
        Ok(())
    })
}

/// Copies record `index` of the last skeleton: its time, mode code,
/// `beta` and position. `x` must hold `x_len` doubles, at least the
/// dimension.
///
/// # Safety
/// All pointers must be valid; `x` must point to `x_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tzz_skeleton_event(
    sampler: *const TzzSampler,
    index: usize,
    t: *mut f64,
    mode: *mut i32,
    beta: *mut f64,
    x: *mut f64,
    x_len: usize,
) -> TzzStatus {
    guard(|| {
        non_null(t, "t")?;
        non_null(mode, "mode")?;
        non_null(beta, "beta")?;
        non_null(x, "x")?;
        let sk = &output_ref(sampler)?.skeleton;
        let e = sk.events.get(index).ok_or_else(|| {
            fail(
                TzzStatus::InvalidArgument,
                format!("index {index} out of range for {} records", sk.events.len()),
            )
        })?;
        let d = e.state.dim();
        if x_len < d {
            return Err(fail(TzzStatus::InvalidArgument, format!("x holds {x_len} values, need {d}")));
        }
        *t = e.t;
        *mode = match e.state.mode {
            Mode::Tempering => TZZ_MODE_TEMPERING,
            Mode::Target => TZZ_MODE_TARGET,
            Mode::Untempered => TZZ_MODE_UNTEMPERED,
        };
        *beta = e.state.beta;
        std::slice::from_raw_parts_mut(x, d).copy_from_slice(&e.state.x);
        Ok(())
    })
}

/// Summary of the last run as a JSON string owned by the caller; release
/// it with [`tzz_string_free`].
///
/// # Safety
/// `sampler` must come from [`tzz_sampler_from_json`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tzz_summary_json(sampler: *const TzzSampler, out: *mut *mut c_char) -> TzzStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let summary = &output_ref(sampler)?.summary;
        let text = serde_json::to_string(summary).map_err(|e| fail(TzzStatus::Internal, e.to_string()))?;
        let c = CString::new(text).map_err(|e| fail(TzzStatus::Internal, e.to_string()))?;
        *out = c.into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tzz_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Releases a sampler. Null is ignored.
///
/// # Safety
/// `sampler` must come from [`tzz_sampler_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tzz_sampler_free(sampler: *mut TzzSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}

/// First event time of the polynomial rate `max(0, sum_k c_k s^k)` on
/// `[0, horizon)` for uniform draw `u`. Sets `found` to 0 when no event
/// occurs before the horizon.
///
/// # Safety
/// `coeffs` must point to `n` doubles; `t` and `found` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tzz_first_event_poly(
    coeffs: *const f64,
    n: usize,
    horizon: f64,
    u: f64,
    t: *mut f64,
    found: *mut i32,
) -> TzzStatus {
    guard(|| {
        non_null(t, "t")?;
        non_null(found, "found")?;
        if n > 0 {
            non_null(coeffs, "coeffs")?;
        }
        let c = if n == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(coeffs, n).to_vec()
        };
        if !(u > 0.0 && u < 1.0) {
            return Err(fail(TzzStatus::InvalidArgument, format!("u must lie in (0, 1), got {u}")));
        }
        let bound = RateBound::new(c, horizon);
        match lift(first_event_poly(&bound, u, tempered_zigzag::event_times::DEFAULT_TOL))? {
            Some(s) => {
                *t = s;
                *found = 1;
            }
            None => {
                *t = f64::INFINITY;
                *found = 0;
            }
        }
        Ok(())
    })
}

/// Importance weight `delta / (exp(delta) - 1)`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tzz_is_weight(delta: f64, out: *mut f64) -> TzzStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = lift(is_weight(delta))?;
        Ok(())
    })
}

/// Rate of leaving the atom at `beta = 1`, `ratio (1 - alpha) / (2 alpha)`,
/// where `ratio` is the left limit of `kappa Z` at 1 over `kappa Z` at 0.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tzz_exit_rate(alpha: f64, ratio: f64, out: *mut f64) -> TzzStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = lift(exit_rate_for(alpha, ratio))?;
        Ok(())
    })
}
