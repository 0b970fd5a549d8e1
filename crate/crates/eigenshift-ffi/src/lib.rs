//! C ABI over the eigenshift toolkit: opaque handles, integer status
//! codes, and a thread-local last-error message. The committed header in
//! include/eigenshift.h mirrors this surface one to one; the header_sync
//! test keeps the two in lockstep.
//!
//! Conventions: every fallible call returns `EsStatus` and writes its
//! result through an out-pointer that is only valid on `ES_OK`. Handles
//! are freed exactly once with their matching `es_*_free`. Getters on a
//! null handle return a zero value and never touch memory.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use eigenshift::linalg::{Matrix, SvdFactors};
use eigenshift::shift::ShiftResult;
use eigenshift::tensor_store::{load_weight_matrix, ActivationDataset, TensorFile};
use eigenshift::{eigenshift as run_eigenshift, svd, Error, Plan, TargetRule, Variant};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EsStatus {
    EsOk = 0,
    EsNullPointer = 1,
    EsInvalidArgument = 2,
    EsNotFound = 3,
    EsIo = 4,
    EsData = 5,
    EsConvergence = 6,
    EsInternal = 7,
}

/// Dense row-major matrix handle.
pub struct EsMatrix(Matrix);

/// Singular value decomposition handle.
pub struct EsSvd(SvdFactors);

/// Result of one spectral shift.
pub struct EsShift(ShiftResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let owned = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(owned));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_of(err: &Error) -> EsStatus {
    match err {
        Error::Io { .. } => EsStatus::EsIo,
        Error::EntryNotFound(_) => EsStatus::EsNotFound,
        Error::InvalidArgument(_) => EsStatus::EsInvalidArgument,
        Error::Convergence { .. } => EsStatus::EsConvergence,
        Error::Format(_) | Error::Shape(_) | Error::Degenerate(_) | Error::NonFinite(_) => {
            EsStatus::EsData
        }
    }
}

fn fail(err: &Error) -> EsStatus {
    set_error(&err.to_string());
    status_of(err)
}

fn null_pointer(what: &str) -> EsStatus {
    set_error(&format!("{what} is null"));
    EsStatus::EsNullPointer
}

/// Runs the body with a panic shield: a panic becomes `EsInternal`
/// instead of unwinding across the ABI boundary.
fn guarded<F: FnOnce() -> EsStatus>(body: F) -> EsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            EsStatus::EsInternal
        }
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, EsStatus> {
    if ptr.is_null() {
        return Err(null_pointer(what));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        EsStatus::EsInvalidArgument
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn es_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on this thread, or null if
/// the last call succeeded. The pointer is valid until the next failing
/// call on the same thread.
#[no_mangle]
pub extern "C" fn es_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |msg| msg.as_ptr())
    })
}

/// Creates a dense row-major matrix from `rows * cols` doubles.
///
/// # Safety
/// `data` must point to at least `rows * cols` readable doubles, and
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn es_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut EsMatrix,
) -> EsStatus {
    guarded(|| {
        if out.is_null() {
            return null_pointer("out");
        }
        if data.is_null() {
            return null_pointer("data");
        }
        let Some(len) = rows.checked_mul(cols) else {
            set_error("rows * cols overflows");
            return EsStatus::EsInvalidArgument;
        };
        let values = std::slice::from_raw_parts(data, len).to_vec();
        match Matrix::new(rows, cols, values) {
            Ok(m) => {
                clear_error();
                *out = Box::into_raw(Box::new(EsMatrix(m)));
                EsStatus::EsOk
            }
            Err(e) => fail(&e),
        }
    })
}

/// Loads a 2-d weight tensor from a checkpoint file.
///
/// # Safety
/// `path` and `tensor` must be NUL-terminated strings and `out` a valid
/// handle slot.
#[no_mangle]
pub unsafe extern "C" fn es_matrix_from_checkpoint(
    path: *const c_char,
    tensor: *const c_char,
    out: *mut *mut EsMatrix,
) -> EsStatus {
    guarded(|| {
        if out.is_null() {
            return null_pointer("out");
        }
        let path = match cstr_arg(path, "path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let tensor = match cstr_arg(tensor, "tensor") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let loaded = TensorFile::open(Path::new(path))
            .and_then(|tf| load_weight_matrix(&tf, tensor));
        match loaded {
            Ok(w) => {
                clear_error();
                *out = Box::into_raw(Box::new(EsMatrix(w.matrix)));
                EsStatus::EsOk
            }
            Err(e) => fail(&e),
        }
    })
}

/// Frees a matrix handle; null is a no-op.
///
/// # Safety
/// `m` must be null or a handle returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn es_matrix_free(m: *mut EsMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Row count; 0 on a null handle.
///
/// # Safety
/// `m` must be null or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn es_matrix_rows(m: *const EsMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

/// Column count; 0 on a null handle.
///
/// # Safety
/// `m` must be null or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn es_matrix_cols(m: *const EsMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.cols())
}

/// Copies the matrix entries, row major, into `out`. `len` must equal
/// `rows * cols`.
///
/// # Safety
/// `out` must point to at least `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn es_matrix_copy_data(
    m: *const EsMatrix,
    out: *mut f64,
    len: usize,
) -> EsStatus {
    guarded(|| {
        let Some(m) = m.as_ref() else {
            return null_pointer("matrix");
        };
        if out.is_null() {
            return null_pointer("out");
        }
        let data = m.0.data();
        if len != data.len() {
            set_error(&format!(
                "buffer holds {len} values, matrix has {}",
                data.len()
            ));
            return EsStatus::EsInvalidArgument;
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(data);
        clear_error();
        EsStatus::EsOk
    })
}

/// Decomposes a tall matrix (rows >= cols) into singular factors.
///
/// # Safety
/// `m` must be a live matrix handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn es_svd_compute(m: *const EsMatrix, out: *mut *mut EsSvd) -> EsStatus {
    guarded(|| {
        let Some(m) = m.as_ref() else {
            return null_pointer("matrix");
        };
        if out.is_null() {
            return null_pointer("out");
        }
        match svd(&m.0) {
            Ok(factors) => {
                clear_error();
                *out = Box::into_raw(Box::new(EsSvd(factors)));
                EsStatus::EsOk
            }
            Err(e) => fail(&e),
        }
    })
}

/// Frees a decomposition handle; null is a no-op.
///
/// # Safety
/// `s` must be null or a handle returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn es_svd_free(s: *mut EsSvd) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of singular values; 0 on a null handle.
///
/// # Safety
/// `s` must be null or a live decomposition handle.
#[no_mangle]
pub unsafe extern "C" fn es_svd_sigma_len(s: *const EsSvd) -> usize {
    s.as_ref().map_or(0, |s| s.0.sigma().len())
}

/// Copies the singular values, descending, into `out`. `len` must equal
/// `es_svd_sigma_len`.
///
/// # Safety
/// `out` must point to at least `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn es_svd_sigma(s: *const EsSvd, out: *mut f64, len: usize) -> EsStatus {
    guarded(|| {
        let Some(s) = s.as_ref() else {
            return null_pointer("svd");
        };
        if out.is_null() {
            return null_pointer("out");
        }
        let sigma = s.0.sigma();
        if len != sigma.len() {
            set_error(&format!(
                "buffer holds {len} values, spectrum has {}",
                sigma.len()
            ));
            return EsStatus::EsInvalidArgument;
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(sigma);
        clear_error();
        EsStatus::EsOk
    })
}

/// Multiplies the factors back into a matrix.
///
/// # Safety
/// `s` must be a live decomposition handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn es_svd_reconstruct(
    s: *const EsSvd,
    out: *mut *mut EsMatrix,
) -> EsStatus {
    guarded(|| {
        let Some(s) = s.as_ref() else {
            return null_pointer("svd");
        };
        if out.is_null() {
            return null_pointer("out");
        }
        clear_error();
        *out = Box::into_raw(Box::new(EsMatrix(s.0.reconstruct())));
        EsStatus::EsOk
    })
}

/// Scores every singular direction on a labelled activation set, damps
/// the `top_k` highest-gap directions by `alpha`, and rebuilds the
/// weights. `hidden` is `samples * dim` doubles, row major; `labels` are
/// one byte per sample (nonzero = toxic). `sigma_scaled` nonzero selects
/// the sigma-weighted activation variant.
///
/// # Safety
/// `w` must be a live matrix handle, `hidden` must hold `samples * dim`
/// readable doubles, `labels` must hold `samples` readable bytes, and
/// `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn es_shift_run(
    w: *const EsMatrix,
    hidden: *const f64,
    samples: usize,
    dim: usize,
    labels: *const u8,
    alpha: f64,
    top_k: usize,
    sigma_scaled: c_int,
    out: *mut *mut EsShift,
) -> EsStatus {
    guarded(|| {
        let Some(w) = w.as_ref() else {
            return null_pointer("weights");
        };
        if hidden.is_null() {
            return null_pointer("hidden");
        }
        if labels.is_null() {
            return null_pointer("labels");
        }
        if out.is_null() {
            return null_pointer("out");
        }
        let Some(len) = samples.checked_mul(dim) else {
            set_error("samples * dim overflows");
            return EsStatus::EsInvalidArgument;
        };
        let values = std::slice::from_raw_parts(hidden, len).to_vec();
        let labels = std::slice::from_raw_parts(labels, samples)
            .iter()
            .map(|&b| b != 0)
            .collect();
        let variant = if sigma_scaled != 0 {
            Variant::SigmaScaled
        } else {
            Variant::UnitV
        };
        let run = Matrix::new(samples, dim, values)
            .and_then(|hidden| ActivationDataset::new(hidden, labels, BTreeMap::new()))
            .and_then(|ds| {
                let plan = Plan::new(alpha, TargetRule::TopK(top_k), variant)?;
                run_eigenshift(&w.0, &ds, &plan)
            });
        match run {
            Ok(result) => {
                clear_error();
                *out = Box::into_raw(Box::new(EsShift(result)));
                EsStatus::EsOk
            }
            Err(e) => fail(&e),
        }
    })
}

/// Frees a shift handle; null is a no-op.
///
/// # Safety
/// `s` must be null or a handle returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn es_shift_free(s: *mut EsShift) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Copies the edited weight matrix out of a shift result.
///
/// # Safety
/// `s` must be a live shift handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn es_shift_weights(
    s: *const EsShift,
    out: *mut *mut EsMatrix,
) -> EsStatus {
    guarded(|| {
        let Some(s) = s.as_ref() else {
            return null_pointer("shift");
        };
        if out.is_null() {
            return null_pointer("out");
        }
        clear_error();
        *out = Box::into_raw(Box::new(EsMatrix(s.0.w_prime.clone())));
        EsStatus::EsOk
    })
}

/// 1 when the plan changed nothing and the weights are bit-identical to
/// the input, else 0. A null handle reads as 0.
///
/// # Safety
/// `s` must be null or a live shift handle.
#[no_mangle]
pub unsafe extern "C" fn es_shift_identity(s: *const EsShift) -> c_int {
    s.as_ref().map_or(0, |s| c_int::from(s.0.identity))
}

/// Frobenius norm of the weight change; NaN on a null handle.
///
/// # Safety
/// `s` must be null or a live shift handle.
#[no_mangle]
pub unsafe extern "C" fn es_shift_frobenius_delta(s: *const EsShift) -> f64 {
    s.as_ref().map_or(f64::NAN, |s| s.0.frobenius_delta)
}

/// Number of damped directions; 0 on a null handle.
///
/// # Safety
/// `s` must be null or a live shift handle.
#[no_mangle]
pub unsafe extern "C" fn es_shift_target_count(s: *const EsShift) -> usize {
    s.as_ref().map_or(0, |s| s.0.targets.len())
}

/// Copies the damped direction indices, highest gap first. `len` must
/// equal `es_shift_target_count`.
///
/// # Safety
/// `out` must point to at least `len` writable size_t slots.
#[no_mangle]
pub unsafe extern "C" fn es_shift_targets(
    s: *const EsShift,
    out: *mut usize,
    len: usize,
) -> EsStatus {
    guarded(|| {
        let Some(s) = s.as_ref() else {
            return null_pointer("shift");
        };
        if out.is_null() {
            return null_pointer("out");
        }
        if len != s.0.targets.len() {
            set_error(&format!(
                "buffer holds {len} values, result has {}",
                s.0.targets.len()
            ));
            return EsStatus::EsInvalidArgument;
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&s.0.targets);
        clear_error();
        EsStatus::EsOk
    })
}

/// Number of per-direction gap scores; 0 on a null handle.
///
/// # Safety
/// `s` must be null or a live shift handle.
#[no_mangle]
pub unsafe extern "C" fn es_shift_score_count(s: *const EsShift) -> usize {
    s.as_ref().map_or(0, |s| s.0.scores.delta.len())
}

/// Copies the per-direction gap scores in spectrum order. `len` must
/// equal `es_shift_score_count`.
///
/// # Safety
/// `out` must point to at least `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn es_shift_scores(
    s: *const EsShift,
    out: *mut f64,
    len: usize,
) -> EsStatus {
    guarded(|| {
        let Some(s) = s.as_ref() else {
            return null_pointer("shift");
        };
        if out.is_null() {
            return null_pointer("out");
        }
        if len != s.0.scores.delta.len() {
            set_error(&format!(
                "buffer holds {len} values, result has {}",
                s.0.scores.delta.len()
            ));
            return EsStatus::EsInvalidArgument;
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&s.0.scores.delta);
        clear_error();
        EsStatus::EsOk
    })
}

/// Harmonic mean of toxicity reduction and fluency retention. Total:
/// out-of-range or non-finite input yields 0.
#[no_mangle]
pub extern "C" fn es_tph(toxicity_drop: f64, perplexity_change: f64) -> f64 {
    eigenshift::metrics::tph(toxicity_drop, perplexity_change)
}

/// Ranking quality of `scores` against byte labels (nonzero = positive),
/// written to `out`.
///
/// # Safety
/// `scores` must hold `n` readable doubles, `labels` `n` readable bytes,
/// and `out` one writable double.
#[no_mangle]
pub unsafe extern "C" fn es_auroc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> EsStatus {
    metric_call(scores, labels, n, out, eigenshift::metrics::auroc)
}

/// Area under the precision-recall curve for `scores` against byte
/// labels (nonzero = positive), written to `out`.
///
/// # Safety
/// `scores` must hold `n` readable doubles, `labels` `n` readable bytes,
/// and `out` one writable double.
#[no_mangle]
pub unsafe extern "C" fn es_average_precision(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> EsStatus {
    metric_call(scores, labels, n, out, eigenshift::metrics::average_precision)
}

unsafe fn metric_call(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
    metric: fn(&[f64], &[bool]) -> eigenshift::Result<f64>,
) -> EsStatus {
    guarded(|| {
        if scores.is_null() {
            return null_pointer("scores");
        }
        if labels.is_null() {
            return null_pointer("labels");
        }
        if out.is_null() {
            return null_pointer("out");
        }
        let scores = std::slice::from_raw_parts(scores, n);
        let labels: Vec<bool> = std::slice::from_raw_parts(labels, n)
            .iter()
            .map(|&b| b != 0)
            .collect();
        match metric(scores, &labels) {
            Ok(v) => {
                clear_error();
                *out = v;
                EsStatus::EsOk
            }
            Err(e) => fail(&e),
        }
    })
}
