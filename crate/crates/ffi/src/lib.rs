//! C ABI over `thermal_kms`.
//!
//! Every function returns a [`TkStatus`]; results go through out-pointers.
//! Parameter sets and cutoff families are opaque heap handles created by
//! `tk_*_new` and released with the matching `tk_*_free`. After a failure,
//! [`tk_last_error`] copies a human-readable message for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use thermal_kms::casestudies;
use thermal_kms::cutoff::{CutoffFamily, CutoffKind};
use thermal_kms::graphs;
use thermal_kms::propagators::{self, ThermalParams};
use thermal_kms::quadrature::Tolerance;
use thermal_kms::Error;

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TkStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Singular = 3,
    Divergent = 4,
    Budget = 5,
    Unsupported = 6,
    NoGraph = 7,
    Internal = 8,
}

/// Cutoff family selector for [`tk_cutoff_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TkCutoffKind {
    RaisedCosine = 0,
    SmoothBump = 1,
}

/// Opaque thermal parameter set.
pub struct TkParams(ThermalParams);

/// Opaque switching-function family.
pub struct TkCutoff(CutoffFamily);

/// Value with its error estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TkEstimate {
    pub re: f64,
    pub im: f64,
    pub error: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TkStatus {
    match e {
        Error::Domain(_) | Error::Config(_) | Error::UnknownCase(_) | Error::Rejected(_) => TkStatus::Domain,
        Error::Singular(_) => TkStatus::Singular,
        Error::Divergent(_) => TkStatus::Divergent,
        Error::Budget { .. } | Error::NonFinite { .. } => TkStatus::Budget,
        Error::Unsupported(_) | Error::Assembly(_) => TkStatus::Unsupported,
        Error::NoGraph(_) => TkStatus::NoGraph,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (TkStatus, String)>) -> TkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TkStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TkStatus::Internal
        }
    }
}

fn lib<T>(r: thermal_kms::Result<T>) -> Result<T, (TkStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (TkStatus, String) {
    (TkStatus::NullPointer, format!("null pointer passed for `{what}`"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (TkStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(p: *mut T, v: T, what: &str) -> Result<(), (TkStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

fn default_tol() -> Tolerance {
    Tolerance::new(1e-10, 1e-16)
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes, or 0 if no
/// error has been recorded.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn tk_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Create a parameter set with unit coupling and `c = 0`.
///
/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn tk_params_new(beta: f64, mass: f64, out: *mut *mut TkParams) -> TkStatus {
    guard(|| {
        let p = lib(ThermalParams::new(beta, mass))?;
        write(out, Box::into_raw(Box::new(TkParams(p))), "out")
    })
}

/// Set the coupling and the renormalization constant `c`.
///
/// # Safety
/// `params` must come from [`tk_params_new`] and not be freed.
#[no_mangle]
pub unsafe extern "C" fn tk_params_set(params: *mut TkParams, coupling: f64, renorm_c: f64) -> TkStatus {
    guard(|| {
        let p = params.as_mut().ok_or_else(|| null("params"))?;
        let next = p.0.with_coupling(coupling).with_renorm_c(renorm_c);
        lib(next.validate())?;
        p.0 = next;
        Ok(())
    })
}

/// # Safety
/// `params` must be null or come from [`tk_params_new`], and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn tk_params_free(params: *mut TkParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Create a cutoff family with ramp width `epsilon`, plateau start `t0` and
/// dilation `scale_n`.
///
/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn tk_cutoff_new(
    kind: TkCutoffKind,
    epsilon: f64,
    t0: f64,
    scale_n: f64,
    out: *mut *mut TkCutoff,
) -> TkStatus {
    guard(|| {
        let kind = match kind {
            TkCutoffKind::RaisedCosine => CutoffKind::RaisedCosine,
            TkCutoffKind::SmoothBump => CutoffKind::SmoothBump,
        };
        let c = lib(CutoffFamily::new(kind, epsilon, t0, scale_n))?;
        write(out, Box::into_raw(Box::new(TkCutoff(c))), "out")
    })
}

/// # Safety
/// `cutoff` must be null or come from [`tk_cutoff_new`], and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn tk_cutoff_free(cutoff: *mut TkCutoff) {
    if !cutoff.is_null() {
        drop(Box::from_raw(cutoff));
    }
}

/// Thermal Wightman function at `(t, u)`, `u ∈ [-β, 0]`, spatial momentum `p`.
///
/// # Safety
/// Pointers must be valid; `out` is written only on success.
#[no_mangle]
pub unsafe extern "C" fn tk_wightman(params: *const TkParams, t: f64, u: f64, p: f64, out: *mut TkEstimate) -> TkStatus {
    guard(|| {
        let par = deref(params, "params")?;
        let v = lib(propagators::wightman_mixed(t, u, p, &par.0))?;
        write(out, TkEstimate { re: v.re, im: v.im, error: 0.0 }, "out")
    })
}

/// Thermal propagator at `(t, u)`, `u ∈ (-β, β)`.
///
/// # Safety
/// Pointers must be valid; `out` is written only on success.
#[no_mangle]
pub unsafe extern "C" fn tk_thermal(params: *const TkParams, t: f64, u: f64, p: f64, out: *mut TkEstimate) -> TkStatus {
    guard(|| {
        let par = deref(params, "params")?;
        let v = lib(propagators::thermal_mixed(t, u, p, &par.0))?;
        write(out, TkEstimate { re: v.re, im: v.im, error: 0.0 }, "out")
    })
}

/// Closed form of the Matsubara sum `Σ e^{iνu}/(ω² + ν²)` on `u ∈ [0, β]`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tk_matsubara_sum_closed(params: *const TkParams, u: f64, p: f64, out: *mut f64) -> TkStatus {
    guard(|| {
        let par = deref(params, "params")?;
        write(out, lib(propagators::matsubara_sum_closed(u, p, &par.0))?, "out")
    })
}

/// Large-time first-order correction of the quadratic perturbation at equal times.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tk_phi2_f1(params: *const TkParams, p: f64, out: *mut f64) -> TkStatus {
    guard(|| {
        let par = deref(params, "params")?;
        write(out, lib(casestudies::phi2_f1_hat(p, &par.0))?, "out")
    })
}

/// Thermal mass `m_β²`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tk_thermal_mass(params: *const TkParams, out: *mut TkEstimate) -> TkStatus {
    guard(|| {
        let par = deref(params, "params")?;
        let r = lib(casestudies::thermal_mass(&par.0, &default_tol()))?;
        write(out, TkEstimate { re: r.value.re, im: r.value.im, error: r.error_estimate }, "out")
    })
}

/// Second-order large-time correction of the cubic perturbation at `p = 0`, `dt = 0`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tk_phi3_f2(params: *const TkParams, cutoff: *const TkCutoff, out: *mut TkEstimate) -> TkStatus {
    guard(|| {
        let par = deref(params, "params")?;
        let c = deref(cutoff, "cutoff")?;
        let r = lib(casestudies::phi3_f2_inf_00(&par.0, &c.0, &default_tol()))?;
        write(out, TkEstimate { re: r.value.re, im: r.value.im, error: r.error_estimate }, "out")
    })
}

/// Number of connected multigraphs without self-loops on vertices of the
/// given degrees, and the sum of their inverse symmetry factors.
///
/// # Safety
/// `degrees` must be valid for `len` reads; the out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tk_count_graphs(
    degrees: *const u32,
    len: usize,
    out_count: *mut usize,
    out_weight: *mut f64,
) -> TkStatus {
    guard(|| {
        if degrees.is_null() && len > 0 {
            return Err(null("degrees"));
        }
        let d = if len == 0 { &[][..] } else { std::slice::from_raw_parts(degrees, len) };
        let gs = lib(graphs::enumerate_connected(d))?;
        let weight = gs.iter().map(|g| 1.0 / graphs::symmetry_factor(g) as f64).sum();
        write(out_count, gs.len(), "out_count")?;
        write(out_weight, weight, "out_weight")
    })
}
