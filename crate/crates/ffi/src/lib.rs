//! C ABI over `wdesign`.
//!
//! Conventions:
//! - Every fallible function returns a [`WdStatus`]; results go through out
//!   pointers, which are written only on success.
//! - On failure, [`wd_last_error_message`] describes the error. The message
//!   is thread-local and stays valid until the next failing call on the
//!   same thread.
//! - Handles are opaque. Release each one with its `*_free` function;
//!   passing null to a free function is allowed.
//! - Matrices are dense, row-major `double` arrays. Treatments are 0-based.
//! - Panics never cross the boundary. They are reported as
//!   [`WdStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{DMatrix, DVector};
use wdesign::criteria::{self, certify_theorem3, Criterion};
use wdesign::estimable::EstimableSystem;
use wdesign::linalg::SymMatrix;
use wdesign::model::{DesignSpec, EstimationSpace, Information, Nuisance};
use wdesign::weighting::{weight_matrix_from_system, Weight, WeightMatrix};
use wdesign::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Singular = 3,
    Infeasible = 4,
    OutsideEstimationSpace = 5,
    NumericalFailure = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WdNuisance {
    None = 0,
    Intercept = 1,
    /// Consecutive blocks; sizes are passed separately.
    Blocks = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WdCriterion {
    D = 0,
    A = 1,
    E = 2,
}

impl From<WdCriterion> for Criterion {
    fn from(c: WdCriterion) -> Self {
        match c {
            WdCriterion::D => Criterion::D,
            WdCriterion::A => Criterion::A,
            WdCriterion::E => Criterion::E,
        }
    }
}

/// An exact design with its analysed information matrix.
pub struct WdDesign {
    spec: DesignSpec,
    info: Information,
}

pub struct WdSpace(EstimationSpace);

pub struct WdSystem(EstimableSystem);

pub struct WdWeightMatrix(WeightMatrix);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("interior nul removed"));
}

struct Failure(WdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Singular { .. } => WdStatus::Singular,
            Error::Infeasible { .. } => WdStatus::Infeasible,
            Error::OutsideEstimationSpace { .. } | Error::EstimationSpaceMismatch { .. } => {
                WdStatus::OutsideEstimationSpace
            }
            Error::NumericalFailure { .. } | Error::NonFinite(_) | Error::Internal(_) => WdStatus::NumericalFailure,
            _ => WdStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(WdStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(WdStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> WdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WdStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            WdStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn boxed<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    put(out, Box::into_raw(Box::new(value)), "output handle pointer")
}

unsafe fn row_major(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>, Failure> {
    let data = slice(p, rows * cols, what)?;
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

unsafe fn write_matrix(m: &DMatrix<f64>, out: *mut f64, len: usize) -> Result<(), Failure> {
    let need = m.nrows() * m.ncols();
    if len < need {
        return Err(invalid(format!("output buffer holds {len} values, {need} needed")));
    }
    if out.is_null() {
        return Err(null("output buffer"));
    }
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.add(i * m.ncols() + j).write(m[(i, j)]);
        }
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failing call on this thread; empty if none.
#[no_mangle]
pub extern "C" fn wd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a design from `n` 0-based treatment labels.
///
/// # Safety
/// `assignment` must point to `n` values. For `WdNuisance::Blocks`,
/// `block_sizes` must point to `n_blocks` values.
#[no_mangle]
pub unsafe extern "C" fn wd_design_new(
    v: usize,
    assignment: *const usize,
    n: usize,
    nuisance: WdNuisance,
    block_sizes: *const usize,
    n_blocks: usize,
    out: *mut *mut WdDesign,
) -> WdStatus {
    guard(|| {
        let labels = slice(assignment, n, "assignment")?.to_vec();
        let nuisance = match nuisance {
            WdNuisance::None => Nuisance::None,
            WdNuisance::Intercept => Nuisance::Intercept,
            WdNuisance::Blocks => Nuisance::Blocks(slice(block_sizes, n_blocks, "block_sizes")?.to_vec()),
        };
        let spec = DesignSpec::new(v, labels, nuisance)?;
        let info = Information::of(&spec)?;
        boxed(out, WdDesign { spec, info })
    })
}

/// # Safety
/// `design` must be null or a handle from [`wd_design_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wd_design_free(design: *mut WdDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

/// Writes the `v x v` information matrix, row-major, into `out[0..len]`.
///
/// # Safety
/// `design` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn wd_design_information_matrix(design: *const WdDesign, out: *mut f64, len: usize) -> WdStatus {
    guard(|| {
        let d = handle(design, "design")?;
        write_matrix(d.info.matrix().matrix(), out, len)
    })
}

/// Numerical rank of the information matrix.
///
/// # Safety
/// `design` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wd_design_rank(design: *const WdDesign, out: *mut usize) -> WdStatus {
    guard(|| {
        let d = handle(design, "design")?;
        put(out, d.info.rank(), "out")
    })
}

/// Treatment contrasts: the orthogonal complement of the all-ones vector.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wd_space_contrasts(v: usize, out: *mut *mut WdSpace) -> WdStatus {
    guard(|| boxed(out, WdSpace(EstimationSpace::contrasts(v)?)))
}

/// The whole of `R^v`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wd_space_full(v: usize, out: *mut *mut WdSpace) -> WdStatus {
    guard(|| boxed(out, WdSpace(EstimationSpace::full(v)?)))
}

/// # Safety
/// `space` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wd_space_free(space: *mut WdSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// A system of `s` functions given by the `v x s` row-major coefficient
/// matrix `q`, with optional positive weights (null means all 1).
///
/// # Safety
/// `q` must hold `v * s` values; `weights` must be null or hold `s` values.
#[no_mangle]
pub unsafe extern "C" fn wd_system_new(
    v: usize,
    s: usize,
    q: *const f64,
    weights: *const f64,
    out: *mut *mut WdSystem,
) -> WdStatus {
    guard(|| {
        if v == 0 || s == 0 {
            return Err(invalid("a system needs v >= 1 and s >= 1"));
        }
        let q = row_major(q, v, s, "q")?;
        let b = if weights.is_null() {
            None
        } else {
            Some(slice(weights, s, "weights")?.to_vec())
        };
        boxed(out, WdSystem(EstimableSystem::new(q, b)?))
    })
}

/// # Safety
/// `system` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wd_system_free(system: *mut WdSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// Validates a `v x v` row-major nonnegative definite `w` whose column space
/// lies in `space`.
///
/// # Safety
/// `w` must hold `v * v` values; `space` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wd_weight_matrix_new(
    v: usize,
    w: *const f64,
    space: *const WdSpace,
    out: *mut *mut WdWeightMatrix,
) -> WdStatus {
    guard(|| {
        let space = handle(space, "space")?;
        if v == 0 {
            return Err(invalid("v must be positive"));
        }
        let raw = SymMatrix::new(row_major(w, v, v, "w")?)?;
        boxed(out, WdWeightMatrix(WeightMatrix::new(raw, &space.0)?))
    })
}

/// The weight matrix implied by a system.
///
/// # Safety
/// `system` and `space` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wd_weight_matrix_from_system(
    system: *const WdSystem,
    space: *const WdSpace,
    out: *mut *mut WdWeightMatrix,
) -> WdStatus {
    guard(|| {
        let sys = handle(system, "system")?;
        let space = handle(space, "space")?;
        boxed(out, WdWeightMatrix(weight_matrix_from_system(&sys.0, &space.0)?))
    })
}

/// Writes the `v x v` weight matrix, row-major.
///
/// # Safety
/// `w` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn wd_weight_matrix_values(w: *const WdWeightMatrix, out: *mut f64, len: usize) -> WdStatus {
    guard(|| {
        let w = handle(w, "weight matrix")?;
        write_matrix(w.0.matrix().matrix(), out, len)
    })
}

/// # Safety
/// `w` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wd_weight_matrix_free(w: *mut WdWeightMatrix) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Weight of the function with coefficients `q[0..v]`. When `q` is outside
/// the column space of `W`, `*in_span` is false and `*weight` is 0.
///
/// # Safety
/// `w` must be a live handle, `q` must hold `v` values, and both outputs
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn wd_weight_of(
    w: *const WdWeightMatrix,
    q: *const f64,
    v: usize,
    weight: *mut f64,
    in_span: *mut bool,
) -> WdStatus {
    guard(|| {
        let w = handle(w, "weight matrix")?;
        let q = DVector::from_column_slice(slice(q, v, "q")?);
        let (value, inside) = match w.0.weight_of(&q)? {
            Weight::Positive(x) => (x, true),
            Weight::OutsideSpan => (0.0, false),
        };
        if weight.is_null() || in_span.is_null() {
            return Err(null("output pointer"));
        }
        put(weight, value, "weight")?;
        put(in_span, inside, "in_span")
    })
}

/// Criterion value of the system's information matrix, on its positive
/// spectrum.
///
/// # Safety
/// `design` and `system` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wd_criterion_system(
    design: *const WdDesign,
    system: *const WdSystem,
    criterion: WdCriterion,
    out: *mut f64,
) -> WdStatus {
    guard(|| {
        let d = handle(design, "design")?;
        let sys = handle(system, "system")?;
        let value = criteria::phi_for_system_from(&d.info, &sys.0, criterion.into())?;
        put(out, value.positive_value(), "out")
    })
}

/// Criterion value of the weighted information matrix.
///
/// # Safety
/// `design` and `w` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wd_criterion_weighted(
    design: *const WdDesign,
    w: *const WdWeightMatrix,
    criterion: WdCriterion,
    out: *mut f64,
) -> WdStatus {
    guard(|| {
        let d = handle(design, "design")?;
        let w = handle(w, "weight matrix")?;
        let value = criteria::phi_weighted_from(&d.info, &w.0, criterion.into())?;
        put(out, value.positive_value(), "out")
    })
}

/// Compares the positive spectra of the system's information matrix and of
/// the weighted information matrix of its implied weight matrix.
///
/// # Safety
/// All handles must be live; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn wd_certify_system_spectra(
    design: *const WdDesign,
    system: *const WdSystem,
    space: *const WdSpace,
    max_deviation: *mut f64,
    passed: *mut bool,
) -> WdStatus {
    guard(|| {
        let d = handle(design, "design")?;
        let sys = handle(system, "system")?;
        let space = handle(space, "space")?;
        let cert = certify_theorem3(&d.info, &sys.0, &space.0)?;
        if max_deviation.is_null() || passed.is_null() {
            return Err(null("output pointer"));
        }
        put(max_deviation, cert.max_deviation, "max_deviation")?;
        put(passed, cert.passed, "passed")
    })
}

/// Number of treatments of a design.
///
/// # Safety
/// `design` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wd_design_v(design: *const WdDesign) -> usize {
    design.as_ref().map_or(0, |d| d.spec.v())
}
