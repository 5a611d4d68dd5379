//! C ABI over the `slb` crate.
//!
//! Every function returns an [`SlbStatus`]. On failure the message is kept in a
//! thread-local slot readable through [`slb_last_error`]. Models are opaque
//! handles released with [`slb_model_free`]; strings returned by the library
//! are released with [`slb_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use slb::data::{default_feature_names, Dataset, Label, Matrix};
use slb::eval::{fit_method, score, Classifier, FittedModel, MethodConfig, MethodKind, Trained};
use slb::hsic::{hsic_statistic, KernelSpec};
use slb::model_file::ModelFile;
use slb::{Error, ErrorKind, Rng};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    FitError = 4,
    Panic = 5,
}

/// Opaque fitted model.
pub struct SlbModel {
    trained: Trained,
    names: Vec<String>,
}

/// Confusion counts and rates from [`slb_score`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SlbScore {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub error: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub ber: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(e: Error) -> SlbStatus {
    let status = match e.kind() {
        ErrorKind::Usage => SlbStatus::InvalidArgument,
        ErrorKind::Data => SlbStatus::DataError,
        ErrorKind::Fit => SlbStatus::FitError,
    };
    set_error(e.to_string());
    status
}

fn guard<F: FnOnce() -> Result<(), SlbStatus>>(f: F) -> SlbStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SlbStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            SlbStatus::Panic
        }
    }
}

fn null(what: &str) -> SlbStatus {
    set_error(format!("{what} is null"));
    SlbStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, SlbStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        SlbStatus::InvalidArgument
    })
}

unsafe fn matrix_arg(x: *const f64, n: usize, d: usize) -> Result<Matrix, SlbStatus> {
    if x.is_null() {
        return Err(null("x"));
    }
    let len = n.checked_mul(d).ok_or_else(|| fail(Error::InvalidArgument("n * d overflows".into())))?;
    Matrix::from_vec(n, d, slice::from_raw_parts(x, len).to_vec()).map_err(fail)
}

unsafe fn model_ref<'a>(m: *const SlbModel) -> Result<&'a SlbModel, SlbStatus> {
    m.as_ref().ok_or_else(|| null("model"))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn slb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn slb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fit `method` ("slb", "slb-minus", "lu", "nb", "tan", "knn") with default
/// settings on the row-major `n × d` matrix `x` and labels in {-1, +1}.
///
/// # Safety
/// `x` must point to `n * d` doubles, `labels` to `n` ints, `method` to a
/// NUL-terminated string and `out` to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn slb_model_fit(
    x: *const f64,
    n: usize,
    d: usize,
    labels: *const i32,
    method: *const c_char,
    seed: u64,
    out: *mut *mut SlbModel,
) -> SlbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let method: MethodKind = str_arg(method, "method")?.parse().map_err(fail)?;
        if method == MethodKind::Oracle {
            return Err(fail(Error::InvalidArgument("the oracle needs generating networks".into())));
        }
        let x = matrix_arg(x, n, d)?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        let y = slice::from_raw_parts(labels, n)
            .iter()
            .map(|&v| {
                Label::from_i32(v).ok_or_else(|| fail(Error::Data(format!("label {v} is not -1 or 1"))))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let ds = Dataset::from_matrix(x, y).map_err(fail)?;
        let trained = fit_method(method, &ds, &MethodConfig::default(), None, &Rng::new(seed)).map_err(fail)?;
        *out = Box::into_raw(Box::new(SlbModel {
            trained,
            names: default_feature_names(d),
        }));
        Ok(())
    })
}

/// Decision values and labels for `n` rows. Either output may be NULL.
///
/// # Safety
/// `model` must be a live handle, `x` must point to `n * d` doubles and each
/// non-null output to `n` writable elements.
#[no_mangle]
pub unsafe extern "C" fn slb_model_predict(
    model: *const SlbModel,
    x: *const f64,
    n: usize,
    d: usize,
    out_labels: *mut i32,
    out_scores: *mut f64,
) -> SlbStatus {
    guard(|| {
        let m = model_ref(model)?;
        let x = matrix_arg(x, n, d)?;
        let s = m.trained.decision_values(&x).map_err(fail)?;
        if !out_labels.is_null() {
            let o = slice::from_raw_parts_mut(out_labels, n);
            for (o, v) in o.iter_mut().zip(&s) {
                *o = Label::from_score(*v).as_i32();
            }
        }
        if !out_scores.is_null() {
            slice::from_raw_parts_mut(out_scores, n).copy_from_slice(&s);
        }
        Ok(())
    })
}

/// Number of input features, or 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slb_model_dim(model: *const SlbModel) -> usize {
    model.as_ref().map_or(0, |m| m.names.len())
}

/// Number of bivariate pairs in the model's feature map (0 for knn).
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slb_model_num_pairs(model: *const SlbModel) -> usize {
    model.as_ref().map_or(0, |m| match &m.trained.model {
        FittedModel::Slb(s) => s.retained_pairs().len(),
        FittedModel::Tan(t) => t.map.pairs().len(),
        _ => 0,
    })
}

/// Serialize to a newly allocated JSON string; free it with [`slb_string_free`].
///
/// # Safety
/// `model` must be a live handle and `out` writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn slb_model_to_json(model: *const SlbModel, out: *mut *mut c_char) -> SlbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let m = model_ref(model)?;
        let json = ModelFile::from_trained(&m.trained, &m.names)
            .and_then(|f| f.to_json())
            .map_err(fail)?;
        *out = CString::new(json).map_err(|_| fail(Error::Format("NUL in JSON".into())))?.into_raw();
        Ok(())
    })
}

/// Parse a model from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn slb_model_from_json(json: *const c_char, out: *mut *mut SlbModel) -> SlbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let file = ModelFile::from_json(str_arg(json, "json")?).map_err(fail)?;
        let names = file.feature_names.clone();
        let trained = file.into_trained().map_err(fail)?;
        *out = Box::into_raw(Box::new(SlbModel { trained, names }));
        Ok(())
    })
}

/// Write the model file to `path`.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn slb_model_save(model: *const SlbModel, path: *const c_char) -> SlbStatus {
    guard(|| {
        let m = model_ref(model)?;
        let path = str_arg(path, "path")?;
        slb::model_file::save_model(&m.trained, &m.names, path).map_err(fail)
    })
}

/// Read a model file from `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn slb_model_load(path: *const c_char, out: *mut *mut SlbModel) -> SlbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let (trained, names) = slb::model_file::load_model(str_arg(path, "path")?).map_err(fail)?;
        *out = Box::into_raw(Box::new(SlbModel { trained, names }));
        Ok(())
    })
}

/// Release a model handle. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slb_model_free(model: *mut SlbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Release a string returned by the library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Biased HSIC statistic of two samples with median-heuristic Gaussian kernels.
///
/// # Safety
/// `z` and `w` must point to `n` doubles and `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn slb_hsic_statistic(z: *const f64, w: *const f64, n: usize, out: *mut f64) -> SlbStatus {
    guard(|| {
        if z.is_null() || w.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let z = slice::from_raw_parts(z, n);
        let w = slice::from_raw_parts(w, n);
        let r = hsic_statistic(z, w, &KernelSpec::median(), &KernelSpec::median()).map_err(fail)?;
        *out = r.statistic;
        Ok(())
    })
}

/// Confusion counts, error rate, sensitivity, specificity and BER of `n`
/// predictions against labels, both in {-1, +1}.
///
/// # Safety
/// `pred` and `labels` must point to `n` ints and `out` to one writable [`SlbScore`].
#[no_mangle]
pub unsafe extern "C" fn slb_score(pred: *const i32, labels: *const i32, n: usize, out: *mut SlbScore) -> SlbStatus {
    guard(|| {
        if pred.is_null() || labels.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let conv = |p: *const i32| {
            slice::from_raw_parts(p, n)
                .iter()
                .map(|&v| Label::from_i32(v).ok_or_else(|| fail(Error::Data(format!("label {v} is not -1 or 1")))))
                .collect::<Result<Vec<_>, _>>()
        };
        let r = score(&conv(pred)?, &conv(labels)?).map_err(fail)?;
        *out = SlbScore {
            tp: r.tp,
            fp: r.fp,
            tn: r.tn,
            fn_: r.fn_,
            error: r.error,
            sensitivity: r.sensitivity,
            specificity: r.specificity,
            ber: r.ber,
        };
        Ok(())
    })
}
