//! C ABI over `cavsim`.
//!
//! Every fallible call returns a [`CavsimStatus`]; on failure the message is
//! kept per thread and read with [`cavsim_last_error`]. Handles are opaque and
//! released with their `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cavsim::css::{postselect_run, CssParams, Gate, PostselectConfig};
use cavsim::fock::{css_fidelity_closed, UnitTag};
use cavsim::photon::{shaping_schedule, RateConvention, ReadoutParams, Shaping, ShapingOptions};
use cavsim::runner::{run_config, Overrides};
use cavsim::schedule::Schedule;
use cavsim::SimError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CavsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Truncation = 5,
    Numerical = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &SimError) -> CavsimStatus {
    match e {
        SimError::Context { source, .. } | SimError::Trajectory { source, .. } => status_of(source),
        SimError::Config(_) => CavsimStatus::Config,
        SimError::Io(_) => CavsimStatus::Io,
        SimError::TruncationUnsafe { .. } => CavsimStatus::Truncation,
        SimError::InvalidDimension(_)
        | SimError::LayoutMismatch(_)
        | SimError::InvalidArgument(_)
        | SimError::UnknownChannel(_)
        | SimError::NkfInapplicable(_)
        | SimError::Unsupported(_) => CavsimStatus::InvalidArgument,
        _ => CavsimStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (CavsimStatus, String)>) -> CavsimStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CavsimStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            CavsimStatus::Panic
        }
    }
}

fn sim<T>(r: cavsim::Result<T>) -> Result<T, (CavsimStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (CavsimStatus, String) {
    (CavsimStatus::NullPointer, format!("null pointer: {what}"))
}

fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (CavsimStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and NUL-terminated by contract.
    let s = unsafe { CStr::from_ptr(p) };
    s.to_str()
        .map(PathBuf::from)
        .map_err(|_| (CavsimStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn cavsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cavsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fidelity of the state after `n` instantaneous position jumps from vacuum
/// with the even or odd cat of the same parity.
#[no_mangle]
pub extern "C" fn cavsim_css_fidelity_closed(n: u32, out: *mut f64) -> CavsimStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if n == 0 {
            return Err((CavsimStatus::InvalidArgument, "n must be at least 1".into()));
        }
        // SAFETY: checked non-null.
        unsafe { *out = css_fidelity_closed(n) };
        Ok(())
    })
}

/// Opaque detuning schedule.
pub struct CavsimShaping {
    inner: Shaping,
}

/// Builds the detuning schedule that makes the reduced readout model emit
/// `|xi_k|^2` on a grid starting at 0 with step `dt`. `eliminated_rate`
/// selects the rate prefactor 4 instead of 2.
///
/// # Safety
/// `xi` must point to `len` readable doubles and `out` to a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cavsim_shaping_new(
    g: f64,
    kappa_sc: f64,
    xi: *const f64,
    len: usize,
    dt: f64,
    eliminated_rate: bool,
    out: *mut *mut CavsimShaping,
) -> CavsimStatus {
    guard(|| {
        if xi.is_null() {
            return Err(null("xi"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: caller guarantees `len` readable values.
        let values = unsafe { std::slice::from_raw_parts(xi, len) };
        let xi = sim(Schedule::from_real("xi", 0.0, dt, values, UnitTag::SqrtRate))?;
        let mut p = ReadoutParams::new(g, kappa_sc);
        if eliminated_rate {
            p.rate_convention = RateConvention::Eliminated;
        }
        let s = sim(shaping_schedule(&xi, &p, &ShapingOptions::for_kappa(kappa_sc)))?;
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(Box::new(CavsimShaping { inner: s })) };
        Ok(())
    })
}

/// Number of grid points, or 0 for NULL.
///
/// # Safety
/// `h` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cavsim_shaping_len(h: *const CavsimShaping) -> usize {
    // SAFETY: caller contract.
    unsafe { h.as_ref() }.map_or(0, |s| s.inner.delta.len())
}

/// Number of grid points where the demanded rate was clipped.
///
/// # Safety
/// `h` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cavsim_shaping_clip_count(h: *const CavsimShaping) -> usize {
    // SAFETY: caller contract.
    unsafe { h.as_ref() }.map_or(0, |s| s.inner.clips.len())
}

/// Copies the detuning (and optionally the realized rate) into caller buffers
/// of `len` doubles; `len` must equal [`cavsim_shaping_len`].
///
/// # Safety
/// `h` must be a live handle; non-NULL buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cavsim_shaping_copy(h: *const CavsimShaping, detuning: *mut f64, realized_rate: *mut f64, len: usize) -> CavsimStatus {
    guard(|| {
        // SAFETY: caller contract.
        let s = unsafe { h.as_ref() }.ok_or_else(|| null("handle"))?;
        let n = s.inner.delta.len();
        if len != n {
            return Err((CavsimStatus::InvalidArgument, format!("buffer length {len}, schedule has {n} points")));
        }
        for (buf, src) in [(detuning, &s.inner.delta), (realized_rate, &s.inner.realized)] {
            if !buf.is_null() {
                // SAFETY: caller guarantees `len` writable values.
                let dst = unsafe { std::slice::from_raw_parts_mut(buf, len) };
                for (d, v) in dst.iter_mut().zip(&src.values) {
                    *d = v.re;
                }
            }
        }
        Ok(())
    })
}

/// # Safety
/// `h` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cavsim_shaping_free(h: *mut CavsimShaping) {
    if !h.is_null() {
        // SAFETY: created by Box::into_raw in cavsim_shaping_new.
        drop(unsafe { Box::from_raw(h) });
    }
}

/// Postselection summary; fidelities are NaN when nothing survived.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavsimPostselectStats {
    pub trajectories: usize,
    pub survivors: usize,
    pub fraction: f64,
    pub fraction_std_err: f64,
    pub mean_fidelity: f64,
    pub fidelity_variance: f64,
    pub closed_form_fidelity: f64,
    pub tail_flags: usize,
}

/// Generates `trajectories` postselection attempts for `n_target` position
/// detections. A `max_gap` that is not positive disables gating. Times are
/// in units of `1/gamma`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cavsim_postselect(
    lambda: f64,
    kappa_h: f64,
    dim: usize,
    n_target: u32,
    trajectories: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
    max_gap: f64,
    out: *mut CavsimPostselectStats,
) -> CavsimStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = sim(CssParams::new(lambda, kappa_h, dim))?;
        let cfg = PostselectConfig { n_target, trajectories, horizon, dt, seed };
        let run = sim(postselect_run(&p, &cfg))?;
        let gate = if max_gap > 0.0 { Gate::MaxGap { max_gap } } else { Gate::None };
        let s = run.stats(gate);
        let stats = CavsimPostselectStats {
            trajectories: s.trajectories,
            survivors: s.survivors,
            fraction: s.fraction,
            fraction_std_err: s.fraction_std_err,
            mean_fidelity: s.mean_fidelity.unwrap_or(f64::NAN),
            fidelity_variance: s.fidelity_variance.unwrap_or(f64::NAN),
            closed_form_fidelity: s.closed_form_fidelity,
            tail_flags: s.tail_flags,
        };
        // SAFETY: checked non-null.
        unsafe { *out = stats };
        Ok(())
    })
}

/// Runs a JSON experiment config. `seed < 0` keeps the config's seed;
/// `out_dir` may be NULL to keep the config's output directory.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out_dir` NULL or one.
#[no_mangle]
pub unsafe extern "C" fn cavsim_run_config(config_path: *const c_char, seed: i64, out_dir: *const c_char) -> CavsimStatus {
    guard(|| {
        let config = path_arg(config_path, "config_path")?;
        let out = if out_dir.is_null() { None } else { Some(path_arg(out_dir, "out_dir")?) };
        let seed = u64::try_from(seed).ok();
        sim(run_config(&config, &Overrides { seed, out }))?;
        Ok(())
    })
}
