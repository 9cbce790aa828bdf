//! C ABI over `qbdr`.
//!
//! Models are opaque handles created from JSON and released with
//! [`qbdr_model_free`]. Every computing function returns a [`QbdrStatus`]
//! and writes its result into a caller-owned buffer of `double`s. Matrices
//! are written row-major. Levels and phases are 0-based. After a failure,
//! [`qbdr_last_error`] describes it for the calling thread.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use qbdr::error::{ErrorCategory, QbdError};
use qbdr::linalg::Mat;
use qbdr::matrix_eq::{GMatrices, SolverConfig};
use qbdr::model::{QbdBlocks, RewardSpec};
use qbdr::passage;
use qbdr::stationary;
use qbdr::transform::{self, TimeDomainConfig};

/// Result of every call. Values 2 to 4 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QbdrStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Malformed JSON, invalid model or invalid argument.
    Parse = 2,
    /// A numerical procedure failed.
    Numerical = 3,
    /// The quantity is undefined for this model.
    Precondition = 4,
    /// The output buffer is shorter than required.
    BufferTooSmall = 5,
    /// Internal panic caught at the boundary.
    Internal = 6,
}

/// Opaque model handle.
pub struct QbdrModel {
    blocks: QbdBlocks,
    reward: Option<RewardSpec>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &QbdError) -> QbdrStatus {
    match err.category() {
        ErrorCategory::Parse => QbdrStatus::Parse,
        ErrorCategory::Numerical => QbdrStatus::Numerical,
        ErrorCategory::Precondition => QbdrStatus::Precondition,
    }
}

enum Failure {
    Status(QbdrStatus, String),
    Qbd(QbdError),
}

impl From<QbdError> for Failure {
    fn from(e: QbdError) -> Self {
        Failure::Qbd(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> QbdrStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QbdrStatus::Ok,
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Qbd(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            QbdrStatus::Internal
        }
    }
}

fn model_ref<'a>(model: *const QbdrModel) -> Result<&'a QbdrModel, Failure> {
    // SAFETY: non-null handles come from `qbdr_model_from_json` and stay
    // valid until `qbdr_model_free`.
    unsafe { model.as_ref() }.ok_or_else(|| Failure::Status(QbdrStatus::NullPointer, "model is null".into()))
}

fn out_slice<'a>(out: *mut f64, len: usize, needed: usize) -> Result<&'a mut [f64], Failure> {
    if out.is_null() {
        return Err(Failure::Status(QbdrStatus::NullPointer, "output buffer is null".into()));
    }
    if len < needed {
        return Err(Failure::Status(
            QbdrStatus::BufferTooSmall,
            format!("output buffer holds {len} values, {needed} needed"),
        ));
    }
    // SAFETY: caller guarantees `out` points to at least `len` doubles.
    Ok(unsafe { std::slice::from_raw_parts_mut(out, needed) })
}

fn write_matrix(m: &Mat, out: &mut [f64]) {
    let c = m.ncols();
    for i in 0..m.nrows() {
        for j in 0..c {
            out[i * c + j] = m[(i, j)];
        }
    }
}

fn check_level(blocks: &QbdBlocks, level: usize) -> Result<(), Failure> {
    if level > blocks.capacity {
        return Err(QbdError::LevelOutOfRange {
            level,
            max: blocks.capacity,
        }
        .into());
    }
    Ok(())
}

/// Parse a model from a NUL-terminated JSON document. On success `*out`
/// receives a new handle.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qbdr_model_from_json(json: *const c_char, out: *mut *mut QbdrModel) -> QbdrStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return Err(Failure::Status(QbdrStatus::NullPointer, "null argument".into()));
        }
        let text = unsafe { CStr::from_ptr(json) }
            .to_str()
            .map_err(|e| Failure::Status(QbdrStatus::Parse, format!("JSON is not UTF-8: {e}")))?;
        let (blocks, reward) = QbdBlocks::from_json_str(text)?;
        unsafe { *out = Box::into_raw(Box::new(QbdrModel { blocks, reward })) };
        Ok(())
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qbdr_model_free(model: *mut QbdrModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Phase count and top level of a model.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qbdr_model_dims(
    model: *const QbdrModel,
    phases: *mut usize,
    capacity: *mut usize,
) -> QbdrStatus {
    guard(|| {
        let m = model_ref(model)?;
        if phases.is_null() || capacity.is_null() {
            return Err(Failure::Status(QbdrStatus::NullPointer, "null argument".into()));
        }
        unsafe {
            *phases = m.blocks.n;
            *capacity = m.blocks.capacity;
        }
        Ok(())
    })
}

/// Stationary distribution, `(C+1) n` values ordered by level then phase.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qbdr_stationary(model: *const QbdrModel, out: *mut f64, len: usize) -> QbdrStatus {
    guard(|| {
        let m = model_ref(model)?;
        let b = &m.blocks;
        let buf = out_slice(out, len, (b.capacity + 1) * b.n)?;
        let pi = stationary::stationary_auto(b)?.stacked();
        buf.copy_from_slice(pi.as_slice());
        Ok(())
    })
}

/// Full deviation matrix, `((C+1) n)^2` values.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qbdr_deviation(model: *const QbdrModel, out: *mut f64, len: usize) -> QbdrStatus {
    guard(|| {
        let m = model_ref(model)?;
        let b = &m.blocks;
        let size = (b.capacity + 1) * b.n;
        let buf = out_slice(out, len, size * size)?;
        let d = passage::deviation_matrix(b, &SolverConfig::default())?;
        write_matrix(&d, buf);
        Ok(())
    })
}

/// Deviation block `D_{k,l}`, `n^2` values.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qbdr_deviation_block(
    model: *const QbdrModel,
    k: usize,
    l: usize,
    out: *mut f64,
    len: usize,
) -> QbdrStatus {
    guard(|| {
        let m = model_ref(model)?;
        let b = &m.blocks;
        check_level(b, k)?;
        check_level(b, l)?;
        let buf = out_slice(out, len, b.n * b.n)?;
        let gm = GMatrices::at_zero(b, &SolverConfig::default())?;
        let pi = stationary::stationary_from_g(b, &gm.g, &gm.ghat)?;
        let cols = passage::passage_columns_for_level(b, l, &gm)?;
        write_matrix(&passage::deviation_block_asymptotic(&pi, &cols, k)?, buf);
        Ok(())
    })
}

/// Mean first passage times to `(level, phase)` from every state,
/// `(C+1) n` values.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qbdr_passage(
    model: *const QbdrModel,
    level: usize,
    phase: usize,
    out: *mut f64,
    len: usize,
) -> QbdrStatus {
    guard(|| {
        let m = model_ref(model)?;
        let b = &m.blocks;
        check_level(b, level)?;
        if phase >= b.n {
            return Err(QbdError::Parameter(format!("phase {phase} out of range 0..{}", b.n)).into());
        }
        let buf = out_slice(out, len, (b.capacity + 1) * b.n)?;
        let gm = GMatrices::at_zero(b, &SolverConfig::default())?;
        let col = passage::passage_column(b, level, phase, &gm)?;
        for (k, v) in col.m.iter().enumerate() {
            buf[k * b.n..(k + 1) * b.n].copy_from_slice(v.as_slice());
        }
        Ok(())
    })
}

/// Expected cumulative reward `R_k(t)` for every level and starting phase,
/// using the model's reward section; `(C+1) n` values.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qbdr_reward_time(model: *const QbdrModel, t: f64, out: *mut f64, len: usize) -> QbdrStatus {
    guard(|| {
        let m = model_ref(model)?;
        let b = &m.blocks;
        let g = m
            .reward
            .as_ref()
            .ok_or_else(|| QbdError::Precondition("model has no reward section".into()))?;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(QbdError::Parameter(format!("t must be finite and nonnegative (got {t})")).into());
        }
        let buf = out_slice(out, len, (b.capacity + 1) * b.n)?;
        let levels = transform::reward_time_levels(b, g, t, &TimeDomainConfig::default())?;
        for (k, v) in levels.iter().enumerate() {
            buf[k * b.n..(k + 1) * b.n].copy_from_slice(v.as_slice());
        }
        Ok(())
    })
}

/// Message for the last failure on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn qbdr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}
