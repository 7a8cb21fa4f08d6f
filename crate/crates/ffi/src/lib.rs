//! C interface to attentab. Models and datasets are opaque handles created
//! by the `*_load` functions and released with the matching `*_free`.
//! Every fallible call returns an [`AttentabStatus`]; on failure
//! [`attentab_last_error`] describes what went wrong on the calling thread.
//!
//! Feature buffers are row-major `rows × n_features` arrays of doubles in
//! the dataset's encoded layout: continuous values as-is, categorical
//! columns as their integer codes.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use attentab::data::EncodedDataset;
use attentab::losses::LossSpec;
use attentab::tabnet::TabNet;
use attentab::train::{evaluate, F1Average};
use attentab::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentabStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    SchemaMismatch = 5,
    Numeric = 6,
    State = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentabF1Average {
    Macro = 0,
    Weighted = 1,
}

/// Metrics over every row of a dataset. `loss` is unweighted cross-entropy.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AttentabMetrics {
    pub loss: f64,
    pub accuracy: f64,
    pub f1: f64,
}

/// Opaque trained model.
pub struct AttentabModel(TabNet);

/// Opaque encoded dataset.
pub struct AttentabDataset(EncodedDataset);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> AttentabStatus {
    match err {
        Error::Io { .. } => AttentabStatus::Io,
        Error::Format(_) | Error::Json(_) => AttentabStatus::Format,
        Error::Schema(_) => AttentabStatus::SchemaMismatch,
        Error::Numeric { .. } | Error::NonFinite(_) => AttentabStatus::Numeric,
        Error::State(_) => AttentabStatus::State,
        _ => AttentabStatus::InvalidArgument,
    }
}

struct Fail(AttentabStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(AttentabStatus::NullArgument, format!("{what} is null"))
}

/// Runs `f`, records any error for [`attentab_last_error`] and never lets a
/// panic cross the boundary.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AttentabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AttentabStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AttentabStatus::Internal
        }
    }
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a str, Fail> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map_err(|_| Fail(AttentabStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn model_ref<'a>(model: *const AttentabModel) -> Result<&'a TabNet, Fail> {
    model.as_ref().map(|m| &m.0).ok_or_else(|| null("model"))
}

unsafe fn features_arg<'a>(model: &TabNet, features: *const f64, rows: usize) -> Result<&'a [f64], Fail> {
    if features.is_null() {
        return Err(null("features"));
    }
    let len = rows
        .checked_mul(model.n_raw_features())
        .ok_or_else(|| Fail(AttentabStatus::InvalidArgument, "row count overflows".into()))?;
    Ok(std::slice::from_raw_parts(features, len))
}

unsafe fn out_arg<'a, T>(out: *mut T, out_len: usize, needed: usize) -> Result<&'a mut [T], Fail> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if out_len < needed {
        return Err(Fail(
            AttentabStatus::InvalidArgument,
            format!("output buffer holds {out_len} values, {needed} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(out, needed))
}

/// Message for the most recent failure on this thread, empty after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn attentab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn attentab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn attentab_model_load(path: *const c_char, out: *mut *mut AttentabModel) -> AttentabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = TabNet::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(AttentabModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`attentab_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn attentab_model_free(model: *mut AttentabModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of raw feature columns expected per row and number of classes.
///
/// # Safety
/// `model` must be a live handle; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn attentab_model_dims(
    model: *const AttentabModel,
    n_features: *mut usize,
    n_classes: *mut usize,
) -> AttentabStatus {
    guard(|| {
        let m = model_ref(model)?;
        if let Some(n) = n_features.as_mut() {
            *n = m.n_raw_features();
        }
        if let Some(c) = n_classes.as_mut() {
            *c = m.n_classes();
        }
        Ok(())
    })
}

/// Writes `rows × n_classes` probabilities into `out`.
///
/// # Safety
/// `features` must hold `rows × n_features` doubles and `out` `out_len`.
#[no_mangle]
pub unsafe extern "C" fn attentab_model_predict_proba(
    model: *const AttentabModel,
    features: *const f64,
    rows: usize,
    out: *mut f64,
    out_len: usize,
) -> AttentabStatus {
    guard(|| {
        let m = model_ref(model)?;
        let x = features_arg(m, features, rows)?;
        let dst = out_arg(out, out_len, rows * m.n_classes())?;
        dst.copy_from_slice(m.predict_proba(x, rows)?.data());
        Ok(())
    })
}

/// Writes one predicted class index per row into `out`.
///
/// # Safety
/// `features` must hold `rows × n_features` doubles and `out` `out_len`.
#[no_mangle]
pub unsafe extern "C" fn attentab_model_predict(
    model: *const AttentabModel,
    features: *const f64,
    rows: usize,
    out: *mut usize,
    out_len: usize,
) -> AttentabStatus {
    guard(|| {
        let m = model_ref(model)?;
        let x = features_arg(m, features, rows)?;
        let dst = out_arg(out, out_len, rows)?;
        dst.copy_from_slice(&m.predict(x, rows)?);
        Ok(())
    })
}

/// Mask-based importance of each raw feature over the given rows; the
/// `n_features` values written to `out` sum to 1.
///
/// # Safety
/// `features` must hold `rows × n_features` doubles and `out` `out_len`.
#[no_mangle]
pub unsafe extern "C" fn attentab_model_global_importance(
    model: *const AttentabModel,
    features: *const f64,
    rows: usize,
    out: *mut f64,
    out_len: usize,
) -> AttentabStatus {
    guard(|| {
        let m = model_ref(model)?;
        let x = features_arg(m, features, rows)?;
        let dst = out_arg(out, out_len, m.n_raw_features())?;
        dst.copy_from_slice(&m.explain(x, rows)?.global_importance);
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn attentab_dataset_load(path: *const c_char, out: *mut *mut AttentabDataset) -> AttentabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let data = EncodedDataset::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(AttentabDataset(data)));
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from [`attentab_dataset_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn attentab_dataset_free(dataset: *mut AttentabDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// # Safety
/// `dataset` must be a live handle; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn attentab_dataset_dims(
    dataset: *const AttentabDataset,
    n_rows: *mut usize,
    n_features: *mut usize,
) -> AttentabStatus {
    guard(|| {
        let d = &dataset.as_ref().ok_or_else(|| null("dataset"))?.0;
        if let Some(n) = n_rows.as_mut() {
            *n = d.n_rows();
        }
        if let Some(f) = n_features.as_mut() {
            *f = d.schema.n_features();
        }
        Ok(())
    })
}

/// Scores the model on every row of `dataset`. Fails with
/// `SchemaMismatch` if the dataset was encoded with a different schema.
///
/// # Safety
/// Both handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn attentab_model_evaluate(
    model: *const AttentabModel,
    dataset: *const AttentabDataset,
    average: AttentabF1Average,
    out: *mut AttentabMetrics,
) -> AttentabStatus {
    guard(|| {
        let m = model_ref(model)?;
        let d = &dataset.as_ref().ok_or_else(|| null("dataset"))?.0;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if d.schema.fingerprint() != m.schema().fingerprint() {
            return Err(Error::Schema("dataset schema does not match the model".into()).into());
        }
        let average = match average {
            AttentabF1Average::Macro => F1Average::Macro,
            AttentabF1Average::Weighted => F1Average::Weighted,
        };
        let rows: Vec<usize> = (0..d.n_rows()).collect();
        let r = evaluate(m, d, &rows, &LossSpec::CrossEntropy, average)?;
        *out = AttentabMetrics {
            loss: r.loss,
            accuracy: r.accuracy,
            f1: r.f1,
        };
        Ok(())
    })
}
