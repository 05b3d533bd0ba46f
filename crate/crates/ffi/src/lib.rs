//! C interface to the scthresh threshold library.
//!
//! Models are opaque handles created from a spec string (`ldpc:3,6`,
//! `table:F,G`, `cancel:G,sigma2`) and released with
//! [`scthresh_model_free`]. Every fallible call returns a
//! [`ScthreshStatus`]; the message of the most recent failure on the calling
//! thread is available through [`scthresh_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use scthresh::config::{LoadedModel, ModelSpec};
use scthresh::dynamics::{run_coupled, CoupledConfig, RunOptions, StateVector};
use scthresh::potential::potential_1d;
use scthresh::threshold::{self, ThresholdResult};
use scthresh::{Boundary, Error, Variant};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScthreshStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidString = 2,
    Config = 3,
    Numeric = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScthreshMethod {
    MinRatio = 0,
    De = 1,
    Potential = 2,
    StationaryScan = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScthreshVariant {
    InsideAverage = 0,
    OutsideAverage = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScthreshBoundary {
    Anchored = 0,
    Circular = 1,
}

/// Threshold estimate. `witness` is NaN when the method has no scalar
/// witness.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScthreshThreshold {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub witness: f64,
    pub evaluations: usize,
}

/// Opaque model handle.
pub struct ScthreshModel {
    inner: LoadedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: ScthreshStatus, msg: impl Into<String>) -> ScthreshStatus {
    set_last_error(msg.into());
    status
}

fn from_error(e: Error) -> ScthreshStatus {
    let status = if e.is_config_error() { ScthreshStatus::Config } else { ScthreshStatus::Numeric };
    fail(status, e.to_string())
}

/// Runs `body`, turning panics into [`ScthreshStatus::Panic`].
fn guard(body: impl FnOnce() -> ScthreshStatus) -> ScthreshStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(s) => s,
        Err(_) => fail(ScthreshStatus::Panic, "internal panic"),
    }
}

fn variant(v: ScthreshVariant) -> Variant {
    match v {
        ScthreshVariant::InsideAverage => Variant::InsideAverage,
        ScthreshVariant::OutsideAverage => Variant::OutsideAverage,
    }
}

fn boundary(b: ScthreshBoundary) -> Boundary {
    match b {
        ScthreshBoundary::Anchored => Boundary::Anchored,
        ScthreshBoundary::Circular => Boundary::Circular,
    }
}

fn write_threshold(r: &ThresholdResult, out: *mut ScthreshThreshold) {
    let t = ScthreshThreshold {
        value: r.value,
        lo: r.bracket.0,
        hi: r.bracket.1,
        witness: r.witness.as_ref().and_then(|w| w.point()).unwrap_or(f64::NAN),
        evaluations: r.evaluations,
    };
    // SAFETY: callers check `out` for null before getting here.
    unsafe { out.write(t) };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn scthresh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of the calling thread into `buf`
/// (NUL-terminated, truncated to `len`). Returns the full message length
/// without the NUL, or 0 if there is no message.
///
/// # Safety
///
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn scthresh_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Creates a model from a spec string and stores the handle in `out`.
///
/// # Safety
///
/// `spec` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn scthresh_model_new(spec: *const c_char, out: *mut *mut ScthreshModel) -> ScthreshStatus {
    if spec.is_null() || out.is_null() {
        return fail(ScthreshStatus::NullPointer, "null argument");
    }
    *out = ptr::null_mut();
    let Ok(text) = CStr::from_ptr(spec).to_str() else {
        return fail(ScthreshStatus::InvalidString, "spec is not valid UTF-8");
    };
    guard(|| match ModelSpec::parse(text).and_then(|s| s.load()) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(ScthreshModel { inner }));
            ScthreshStatus::Ok
        }
        Err(e) => from_error(e),
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
///
/// `model` must be null or a handle from [`scthresh_model_new`] that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn scthresh_model_free(model: *mut ScthreshModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// `f(g(x); ε)` with the result clamped to the model's domain.
///
/// # Safety
///
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn scthresh_model_evaluate(
    model: *const ScthreshModel,
    x: f64,
    epsilon: f64,
    out: *mut f64,
) -> ScthreshStatus {
    if model.is_null() || out.is_null() {
        return fail(ScthreshStatus::NullPointer, "null argument");
    }
    let m = &*model;
    guard(|| match m.inner.system().evaluate(x, epsilon) {
        Ok(v) => {
            *out = v;
            ScthreshStatus::Ok
        }
        Err(e) => from_error(e),
    })
}

/// Single-system threshold by `method`. `tol` is the bracket width for the
/// bisection methods and is ignored by the others.
///
/// # Safety
///
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn scthresh_threshold(
    model: *const ScthreshModel,
    method: ScthreshMethod,
    tol: f64,
    out: *mut ScthreshThreshold,
) -> ScthreshStatus {
    if model.is_null() || out.is_null() {
        return fail(ScthreshStatus::NullPointer, "null argument");
    }
    let m = &*model;
    guard(|| {
        let sys = m.inner.system();
        let r = match method {
            ScthreshMethod::MinRatio => threshold::single_threshold_minratio(sys),
            ScthreshMethod::De => threshold::single_threshold_de(sys, tol),
            ScthreshMethod::Potential => threshold::potential_threshold(sys, threshold::DEFAULT_POTENTIAL_GRID, tol),
            ScthreshMethod::StationaryScan => match &m.inner {
                LoadedModel::Cancelation(c) => threshold::cancelation_threshold(c),
                LoadedModel::System(_) => {
                    return fail(ScthreshStatus::Config, "stationary scan needs a cancel: model")
                }
            },
        };
        match r {
            Ok(r) => {
                write_threshold(&r, out);
                ScthreshStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Coupled-chain threshold by bisection on convergence from all-ones.
///
/// # Safety
///
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn scthresh_coupled_threshold(
    model: *const ScthreshModel,
    length: usize,
    width: usize,
    variant_: ScthreshVariant,
    boundary_: ScthreshBoundary,
    tol: f64,
    out: *mut ScthreshThreshold,
) -> ScthreshStatus {
    if model.is_null() || out.is_null() {
        return fail(ScthreshStatus::NullPointer, "null argument");
    }
    let m = &*model;
    guard(|| {
        let r = CoupledConfig::new(length, width).and_then(|c| {
            let c = c.with_variant(variant(variant_)).with_boundary(boundary(boundary_));
            threshold::coupled_threshold_de(m.inner.system(), &c, tol)
        });
        match r {
            Ok(r) => {
                write_threshold(&r, out);
                ScthreshStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Iterates the coupled chain from the uniform state `start` and writes the
/// final state into `state` (`length` entries).
///
/// # Safety
///
/// `model` must be a live handle, `state` must point to `state_len`
/// writable doubles and the remaining out-pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn scthresh_evolve(
    model: *const ScthreshModel,
    length: usize,
    width: usize,
    variant_: ScthreshVariant,
    boundary_: ScthreshBoundary,
    epsilon: f64,
    start: f64,
    max_iter: usize,
    tol: f64,
    state: *mut f64,
    state_len: usize,
    iterations: *mut usize,
    converged_to_zero: *mut bool,
) -> ScthreshStatus {
    if model.is_null() || state.is_null() {
        return fail(ScthreshStatus::NullPointer, "null argument");
    }
    if state_len < length {
        return fail(
            ScthreshStatus::BufferTooSmall,
            format!("state buffer holds {state_len} values, need {length}"),
        );
    }
    let m = &*model;
    guard(|| {
        let run = CoupledConfig::new(length, width).and_then(|c| {
            let c = c.with_variant(variant(variant_)).with_boundary(boundary(boundary_));
            let opts = RunOptions::new(max_iter, tol).quiet();
            run_coupled(m.inner.system(), &c, &StateVector::filled(length, start), epsilon, &opts)
        });
        match run {
            Ok(t) => {
                let last = t.final_state();
                ptr::copy_nonoverlapping(last.as_ptr(), state, length);
                if !iterations.is_null() {
                    *iterations = t.iterations;
                }
                if !converged_to_zero.is_null() {
                    *converged_to_zero = t.converged_to_zero;
                }
                ScthreshStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Scalar potential `U(x; ε)`; `quad_points` applies when the model has no
/// closed form.
///
/// # Safety
///
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn scthresh_potential(
    model: *const ScthreshModel,
    x: f64,
    epsilon: f64,
    quad_points: usize,
    out: *mut f64,
) -> ScthreshStatus {
    if model.is_null() || out.is_null() {
        return fail(ScthreshStatus::NullPointer, "null argument");
    }
    let m = &*model;
    guard(|| match potential_1d(m.inner.system(), x, epsilon, quad_points) {
        Ok(v) => {
            *out = v;
            ScthreshStatus::Ok
        }
        Err(e) => from_error(e),
    })
}
