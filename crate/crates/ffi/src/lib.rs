//! C ABI over the querypulse model artifact and evaluation helpers.
//!
//! Every function returns a [`QpStatus`]. On failure the message is available
//! from [`qp_last_error_message`] on the same thread until the next call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use querypulse::pipeline::ModelArtifact;
use querypulse::Error;

/// Result codes shared by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidArgument = 4,
    InvalidArtifact = 5,
    ShapeMismatch = 6,
    UndefinedAuc = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Opaque handle to a loaded model.
pub struct QpModel {
    artifact: ModelArtifact,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(message));
}

fn status_of(err: &Error) -> QpStatus {
    match err {
        Error::Io(_) => QpStatus::Io,
        Error::Shape { .. } => QpStatus::ShapeMismatch,
        Error::UndefinedAuc => QpStatus::UndefinedAuc,
        Error::Json(_) | Error::Artifact(_) => QpStatus::InvalidArtifact,
        _ => QpStatus::InvalidArgument,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (QpStatus, String)>) -> QpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QpStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("panic inside querypulse".into());
            QpStatus::Panic
        }
    }
}

fn lib_err(err: Error) -> (QpStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (QpStatus, String) {
    (QpStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `ptr` must be null or point to a NUL-terminated string.
unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, (QpStatus, String)> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| (QpStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// Loads a model artifact (`model.json`) from `path`. On success `*out`
/// receives a handle that must be released with [`qp_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qp_model_load(path: *const c_char, out: *mut *mut QpModel) -> QpStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = std::fs::read_to_string(path).map_err(|e| lib_err(Error::Io(e)))?;
        let artifact = ModelArtifact::from_json(&text).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(QpModel { artifact }));
        Ok(())
    })
}

/// Loads a model artifact from a JSON string.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qp_model_load_json(json: *const c_char, out: *mut *mut QpModel) -> QpStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let artifact = ModelArtifact::from_json(json).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(QpModel { artifact }));
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from a load function not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qp_model_free(model: *mut QpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Width of the full indicator row the model expects.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qp_model_num_indicators(model: *const QpModel, out: *mut usize) -> QpStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = model.artifact.indicator_names.len();
        Ok(())
    })
}

/// DSAT probability for one full indicator row of `len` bytes (each 0 or 1).
///
/// # Safety
/// `model` must be a live handle, `row` must point to `len` readable bytes
/// and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qp_model_predict(
    model: *const QpModel,
    row: *const u8,
    len: usize,
    out: *mut f64,
) -> QpStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if row.is_null() {
            return Err(null("row"));
        }
        let row = std::slice::from_raw_parts(row, len);
        if let Some(bad) = row.iter().find(|v| **v > 1) {
            return Err((
                QpStatus::InvalidArgument,
                format!("indicator value {bad} is not 0 or 1"),
            ));
        }
        *out = model.artifact.predict(row).map_err(lib_err)?;
        Ok(())
    })
}

/// Rank AUC of `n` scores against labels (non-zero means positive).
///
/// # Safety
/// `scores` and `labels` must point to `n` readable elements and `out` must
/// be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qp_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> QpStatus {
    guard(|| {
        if scores.is_null() || labels.is_null() {
            return Err(null("scores or labels"));
        }
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let scores = std::slice::from_raw_parts(scores, n);
        let labels: Vec<bool> = std::slice::from_raw_parts(labels, n).iter().map(|l| *l != 0).collect();
        if scores.iter().any(|s| !s.is_finite()) {
            return Err((QpStatus::InvalidArgument, "scores must be finite".into()));
        }
        *out = querypulse::eval::auc(scores, &labels).map_err(lib_err)?;
        Ok(())
    })
}

/// Normalizes a raw query into `buf` (capacity `cap` bytes, NUL included).
/// `*needed` always receives the required capacity; when it exceeds `cap`
/// the call returns `QP_STATUS_BUFFER_TOO_SMALL` and leaves `buf` untouched.
///
/// # Safety
/// `raw` must be a NUL-terminated string, `buf` must be null or point to
/// `cap` writable bytes, and `needed` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qp_normalize_query(
    raw: *const c_char,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> QpStatus {
    guard(|| {
        let raw = str_arg(raw, "raw")?;
        let needed = needed.as_mut().ok_or_else(|| null("needed"))?;
        let normalized = querypulse::event_log::normalize_query(raw).map_err(lib_err)?;
        let bytes = normalized.as_bytes();
        *needed = bytes.len() + 1;
        if buf.is_null() || cap < bytes.len() + 1 {
            return Err((QpStatus::BufferTooSmall, format!("need {} bytes", bytes.len() + 1)));
        }
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), bytes.len());
        *buf.add(bytes.len()) = 0;
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next querypulse call on this thread.
#[no_mangle]
pub extern "C" fn qp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |m| m.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
