//! C ABI over the `epsmech` toolkit.
//!
//! Distributions and mechanisms cross the boundary as opaque handles that the
//! caller releases with the matching `_free` function. Every fallible call
//! returns an [`EpsmechStatus`]; the message of the most recent failure on the
//! calling thread is available from [`epsmech_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use epsmech::delayed::{build_delayed, choose_mu};
use epsmech::deterministic::optimal_det;
use epsmech::dual::{dual_value, optimize_beta};
use epsmech::mechanism::{expected_revenue, verify, VERIFY_TOL};
use epsmech::{Error, Mechanism, ValueDistribution};

/// Opaque value distribution.
pub struct EpsmechDist(ValueDistribution);

/// Opaque selling mechanism.
pub struct EpsmechMechanism(Mechanism);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpsmechStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Domain = 3,
    Singularity = 4,
    Construction = 5,
    Io = 6,
    Config = 7,
    Panic = 8,
}

/// Output of [`epsmech_verify`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EpsmechVerification {
    pub min_ir_slack: f64,
    pub min_ic_slack: f64,
    pub worst_value: f64,
    pub worst_report: f64,
    pub grid_size: usize,
    pub passed: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> EpsmechStatus {
    match err {
        Error::Domain(_) => EpsmechStatus::Domain,
        Error::Singularity(_) => EpsmechStatus::Singularity,
        Error::Construction { .. } => EpsmechStatus::Construction,
        Error::Io { .. } => EpsmechStatus::Io,
        Error::Config(_) => EpsmechStatus::Config,
    }
}

/// Runs `f`, recording failures and turning panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), EpsmechStatus>) -> EpsmechStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EpsmechStatus::Ok,
        Ok(Err(code)) => code,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            EpsmechStatus::Panic
        }
    }
}

fn lift<T>(r: epsmech::Result<T>) -> Result<T, EpsmechStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn null() -> EpsmechStatus {
    set_error("null pointer argument".into());
    EpsmechStatus::NullPointer
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, EpsmechStatus> {
    if s.is_null() {
        return Err(null());
    }
    CStr::from_ptr(s).to_str().map_err(|e| {
        set_error(format!("string is not UTF-8: {e}"));
        EpsmechStatus::InvalidUtf8
    })
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, EpsmechStatus> {
    p.as_ref().ok_or_else(null)
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), EpsmechStatus> {
    if out.is_null() {
        return Err(null());
    }
    out.write(value);
    Ok(())
}

/// Message for the last failed call on this thread, or NULL if none.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn epsmech_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a distribution from its JSON description.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn epsmech_dist_from_json(json: *const c_char, out: *mut *mut EpsmechDist) -> EpsmechStatus {
    guard(|| {
        let text = read_str(json)?;
        let dist = lift(ValueDistribution::from_json_str(text))?;
        write(out, Box::into_raw(Box::new(EpsmechDist(dist))))
    })
}

/// Uniform distribution on `[0, v_bar]`.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn epsmech_dist_uniform(v_bar: f64, out: *mut *mut EpsmechDist) -> EpsmechStatus {
    guard(|| {
        let dist = lift(ValueDistribution::uniform(v_bar))?;
        write(out, Box::into_raw(Box::new(EpsmechDist(dist))))
    })
}

/// # Safety
/// `dist` must be NULL or a handle from this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn epsmech_dist_free(dist: *mut EpsmechDist) {
    if !dist.is_null() {
        drop(Box::from_raw(dist));
    }
}

/// Monopoly price and revenue.
///
/// # Safety
/// `dist` must be a live handle; `price` and `revenue` writable pointers.
#[no_mangle]
pub unsafe extern "C" fn epsmech_dist_optimal_price(
    dist: *const EpsmechDist,
    price: *mut f64,
    revenue: *mut f64,
) -> EpsmechStatus {
    guard(|| {
        let (p, r) = deref(dist)?.0.optimal_price();
        write(price, p)?;
        write(revenue, r)
    })
}

/// Survival function `1 − F(v)`.
///
/// # Safety
/// `dist` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn epsmech_dist_sf(dist: *const EpsmechDist, v: f64, out: *mut f64) -> EpsmechStatus {
    guard(|| write(out, deref(dist)?.0.sf(v)))
}

/// Best deterministic floor mechanism at `eps`.
///
/// # Safety
/// `dist` must be a live handle; the three outputs writable pointers.
#[no_mangle]
pub unsafe extern "C" fn epsmech_det_optimum(
    dist: *const EpsmechDist,
    eps: f64,
    reserve: *mut f64,
    value: *mut f64,
    gain: *mut f64,
) -> EpsmechStatus {
    guard(|| {
        let d = lift(optimal_det(&deref(dist)?.0, eps))?;
        write(reserve, d.reserve)?;
        write(value, d.value)?;
        write(gain, d.gain)
    })
}

/// Builds the perturbed delayed mechanism. A nonpositive `mu` selects it
/// automatically from the distribution's envelope exponent.
///
/// # Safety
/// `dist` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn epsmech_delayed_build(
    dist: *const EpsmechDist,
    eps: f64,
    mu: f64,
    out: *mut *mut EpsmechMechanism,
) -> EpsmechStatus {
    guard(|| {
        let d = &deref(dist)?.0;
        let mu = if mu > 0.0 {
            mu
        } else {
            let alpha = match d.envelope() {
                Some(e) => e.alpha,
                None => {
                    set_error("distribution has no envelope exponent; pass mu explicitly".into());
                    return Err(EpsmechStatus::Domain);
                }
            };
            lift(choose_mu(eps, alpha, d))?.mu
        };
        let (mech, _, _) = lift(build_delayed(d, eps, mu))?;
        write(out, Box::into_raw(Box::new(EpsmechMechanism(mech))))
    })
}

/// Parses a mechanism from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn epsmech_mech_from_json(json: *const c_char, out: *mut *mut EpsmechMechanism) -> EpsmechStatus {
    guard(|| {
        let mech = lift(Mechanism::from_json_str(read_str(json)?))?;
        write(out, Box::into_raw(Box::new(EpsmechMechanism(mech))))
    })
}

/// # Safety
/// `mech` must be NULL or a handle from this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn epsmech_mech_free(mech: *mut EpsmechMechanism) {
    if !mech.is_null() {
        drop(Box::from_raw(mech));
    }
}

/// Allocation probability and payment at report `v`.
///
/// # Safety
/// `mech` must be a live handle; `alloc` and `transfer` writable pointers.
#[no_mangle]
pub unsafe extern "C" fn epsmech_mech_eval(
    mech: *const EpsmechMechanism,
    v: f64,
    alloc: *mut f64,
    transfer: *mut f64,
) -> EpsmechStatus {
    guard(|| {
        let m = &deref(mech)?.0;
        write(alloc, m.alloc(v))?;
        write(transfer, m.transfer(v))
    })
}

/// Serializes a mechanism; free the result with [`epsmech_string_free`].
///
/// # Safety
/// `mech` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn epsmech_mech_to_json(mech: *const EpsmechMechanism, out: *mut *mut c_char) -> EpsmechStatus {
    guard(|| {
        let text = deref(mech)?.0.to_json();
        let c = CString::new(text).map_err(|_| {
            set_error("mechanism JSON contains NUL".into());
            EpsmechStatus::InvalidUtf8
        })?;
        write(out, c.into_raw())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn epsmech_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Expected revenue of `mech` under `dist`.
///
/// # Safety
/// Both handles must be live and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn epsmech_expected_revenue(
    mech: *const EpsmechMechanism,
    dist: *const EpsmechDist,
    out: *mut f64,
) -> EpsmechStatus {
    guard(|| write(out, expected_revenue(&deref(mech)?.0, &deref(dist)?.0)))
}

/// Checks IR and ε-IC on a grid of `grid_size` values.
///
/// # Safety
/// Both handles must be live and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn epsmech_verify(
    mech: *const EpsmechMechanism,
    dist: *const EpsmechDist,
    eps: f64,
    grid_size: usize,
    out: *mut EpsmechVerification,
) -> EpsmechStatus {
    guard(|| {
        let r = lift(verify(&deref(mech)?.0, &deref(dist)?.0, eps, grid_size, VERIFY_TOL))?;
        write(
            out,
            EpsmechVerification {
                min_ir_slack: r.min_ir_slack,
                min_ic_slack: r.min_ic_slack,
                worst_value: r.worst_value,
                worst_report: r.worst_report,
                grid_size: r.grid_size,
                passed: r.passed,
            },
        )
    })
}

/// Dual upper bound on the optimal ε-IC revenue. A nonpositive `beta` is
/// optimized around the envelope-based default.
///
/// # Safety
/// `dist` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn epsmech_dual_bound(dist: *const EpsmechDist, eps: f64, beta: f64, out: *mut f64) -> EpsmechStatus {
    guard(|| {
        let d = &deref(dist)?.0;
        let cert = if beta > 0.0 {
            lift(dual_value(d, eps, beta))?
        } else {
            let alpha = d.envelope().map_or(2.0, |e| e.alpha);
            lift(optimize_beta(d, eps, alpha))?.1
        };
        write(out, cert.bound)
    })
}

/// `Γ(t)`; NaN for negative or non-finite `t`.
#[no_mangle]
pub extern "C" fn epsmech_gamma(t: f64) -> f64 {
    if t >= 0.0 && t.is_finite() {
        epsmech::gamma::gamma(t)
    } else {
        f64::NAN
    }
}
