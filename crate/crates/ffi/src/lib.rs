//! C ABI over the `depcens` engine.
//!
//! Conventions:
//! - Every fallible function returns a [`DcStatus`]; results go through out
//!   pointers, which are left untouched on failure.
//! - On failure, [`dc_last_error`] returns a message for the calling thread.
//! - Objects are opaque handles created by `*_new` / `*_load` functions and
//!   released with the matching `*_free`.
//! - Matrices are dense, row-major `double` arrays.
//! - Panics never cross the boundary; they are reported as
//!   [`DcStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;

use depcens::booster::{BaseScore, TrainConfig, TreeEnsemble};
use depcens::data::{Matrix, SurvivalDataset};
use depcens::distributions::{BaselineFamily, BaselineSpec};
use depcens::loss::{ClaytonAftLoss, IndependentAftLoss, LossSpec};
use depcens::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or an unknown enum value.
    InvalidArgument = 1,
    Domain = 2,
    Shape = 3,
    Config = 4,
    Data = 5,
    Numeric = 6,
    Persistence = 7,
    UndefinedMetric = 8,
    Io = 9,
    Panic = 10,
}

/// Standardized error distribution of a log-time margin.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcBaselineFamily {
    Extreme = 0,
    Normal = 1,
    Logistic = 2,
}

// Families cross the boundary as plain integers: an out-of-range value in
// a Rust enum would be undefined behaviour.
fn family(code: i32) -> Result<BaselineFamily, Fail> {
    match code {
        c if c == DcBaselineFamily::Extreme as i32 => Ok(BaselineFamily::Extreme),
        c if c == DcBaselineFamily::Normal as i32 => Ok(BaselineFamily::Normal),
        c if c == DcBaselineFamily::Logistic as i32 => Ok(BaselineFamily::Logistic),
        c => Err(Fail::Arg(format!("unknown baseline family {c}"))),
    }
}

/// Booster hyperparameters. Start from [`dc_train_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DcTrainParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    /// Non-zero: start from `base_score`. Zero: start from the mean log time.
    pub use_base_score: i32,
    pub base_score: f64,
}

impl From<DcTrainParams> for TrainConfig {
    fn from(p: DcTrainParams) -> Self {
        TrainConfig {
            rounds: p.rounds,
            learning_rate: p.learning_rate,
            max_depth: p.max_depth,
            lambda: p.lambda,
            gamma: p.gamma,
            min_child_weight: p.min_child_weight,
            base_score: if p.use_base_score != 0 {
                BaseScore::Value(p.base_score)
            } else {
                BaseScore::Auto
            },
            seed: 0,
        }
    }
}

/// Trained tree ensemble.
pub struct DcModel {
    inner: TreeEnsemble,
}

/// Survival loss specification.
pub struct DcLoss {
    inner: LossSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DcStatus {
    match e {
        Error::Domain(_) => DcStatus::Domain,
        Error::Shape(_) => DcStatus::Shape,
        Error::Config(_) => DcStatus::Config,
        Error::Data(_) => DcStatus::Data,
        Error::Numeric(_) => DcStatus::Numeric,
        Error::Persistence(_) => DcStatus::Persistence,
        Error::UndefinedMetric(_) => DcStatus::UndefinedMetric,
        Error::Io { .. } => DcStatus::Io,
    }
}

/// Failure inside a boundary call.
enum Fail {
    Arg(String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn arg(msg: &str) -> Fail {
    Fail::Arg(msg.to_string())
}

/// Run `f`, translating errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> DcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DcStatus::Ok,
        Ok(Err(Fail::Arg(m))) => {
            set_last_error(&m);
            DcStatus::InvalidArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            DcStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Arg(format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Arg(format!("{name} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Arg(format!("{name} is null")));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Arg(format!("{name} is null")));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail::Arg(format!("{name} is null")))
}

fn matrix(x: &[f64], n_rows: usize, n_cols: usize) -> Result<Matrix, Fail> {
    Ok(Matrix::new(n_rows, n_cols, x.to_vec())?)
}

fn rows_times_cols(n_rows: usize, n_cols: usize) -> Result<usize, Fail> {
    n_rows
        .checked_mul(n_cols)
        .ok_or_else(|| arg("n_rows * n_cols overflows"))
}

/// Message describing the last failure on this thread. The pointer stays
/// valid until the next failing call on the same thread. Empty if no call
/// has failed.
#[no_mangle]
pub extern "C" fn dc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn dc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default booster hyperparameters.
#[no_mangle]
pub extern "C" fn dc_train_params_default() -> DcTrainParams {
    let d = TrainConfig::default();
    DcTrainParams {
        rounds: d.rounds,
        learning_rate: d.learning_rate,
        max_depth: d.max_depth,
        lambda: d.lambda,
        gamma: d.gamma,
        min_child_weight: d.min_child_weight,
        use_base_score: 0,
        base_score: 0.0,
    }
}

/// Clayton dependent-censoring loss. Families are `DcBaselineFamily`
/// values.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn dc_loss_clayton_new(
    theta: f64,
    event_family: i32,
    event_sigma: f64,
    censor_family: i32,
    censor_sigma: f64,
    out: *mut *mut DcLoss,
) -> DcStatus {
    guard(|| {
        if out.is_null() {
            return Err(arg("out is null"));
        }
        let e = BaselineSpec::new(family(event_family)?, event_sigma)?;
        let c = BaselineSpec::new(family(censor_family)?, censor_sigma)?;
        let inner = LossSpec::Clayton(ClaytonAftLoss::new(theta, e, c)?);
        *out = Box::into_raw(Box::new(DcLoss { inner }));
        Ok(())
    })
}

/// Independent-censoring AFT loss. `family` is a `DcBaselineFamily` value.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn dc_loss_independent_new(
    family_code: i32,
    sigma: f64,
    out: *mut *mut DcLoss,
) -> DcStatus {
    guard(|| {
        if out.is_null() {
            return Err(arg("out is null"));
        }
        let b = BaselineSpec::new(family(family_code)?, sigma)?;
        let inner = LossSpec::Independent(IndependentAftLoss::new(b)?);
        *out = Box::into_raw(Box::new(DcLoss { inner }));
        Ok(())
    })
}

/// # Safety
/// `loss` must come from a `dc_loss_*_new` call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dc_loss_free(loss: *mut DcLoss) {
    if !loss.is_null() {
        drop(Box::from_raw(loss));
    }
}

/// Loss value and its first and second derivatives in `yhat` for one
/// observation. Any of the out pointers may be null.
///
/// # Safety
/// `loss` must be a live handle; non-null out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_loss_evaluate(
    loss: *const DcLoss,
    time: f64,
    event: i32,
    yhat: f64,
    out_value: *mut f64,
    out_grad: *mut f64,
    out_hess: *mut f64,
) -> DcStatus {
    guard(|| {
        let loss = ref_arg(loss, "loss")?;
        let ev = loss.inner.evaluate(time, event != 0, yhat)?;
        for (p, v) in [(out_value, ev.value), (out_grad, ev.grad), (out_hess, ev.hess)] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Fit a booster on `n_rows` observations with `n_cols` features.
/// `events[i]` is non-zero when row `i` is an observed event.
///
/// # Safety
/// Array pointers must reference at least the stated number of elements;
/// `params` may be null for defaults; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_train(
    time: *const f64,
    events: *const u8,
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    loss: *const DcLoss,
    params: *const DcTrainParams,
    out: *mut *mut DcModel,
) -> DcStatus {
    guard(|| {
        if out.is_null() {
            return Err(arg("out is null"));
        }
        let loss = ref_arg(loss, "loss")?;
        let t = slice_arg(time, n_rows, "time")?;
        let e = slice_arg(events, n_rows, "events")?;
        let xs = slice_arg(x, rows_times_cols(n_rows, n_cols)?, "x")?;
        let cfg: TrainConfig = match params.as_ref() {
            Some(p) => (*p).into(),
            None => TrainConfig::default(),
        };
        let data = SurvivalDataset::new(
            t.to_vec(),
            e.iter().map(|&b| b != 0).collect(),
            matrix(xs, n_rows, n_cols)?,
        )?;
        let inner = depcens::booster::train(&data, &loss.inner, &cfg)?;
        *out = Box::into_raw(Box::new(DcModel { inner }));
        Ok(())
    })
}

/// Load a model from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_model_load(path: *const c_char, out: *mut *mut DcModel) -> DcStatus {
    guard(|| {
        if out.is_null() {
            return Err(arg("out is null"));
        }
        let inner = TreeEnsemble::load(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(DcModel { inner }));
        Ok(())
    })
}

/// Parse a model from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_model_from_json(json: *const c_char, out: *mut *mut DcModel) -> DcStatus {
    guard(|| {
        if out.is_null() {
            return Err(arg("out is null"));
        }
        let inner = TreeEnsemble::from_json(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(DcModel { inner }));
        Ok(())
    })
}

/// Serialize a model to JSON. Free the result with [`dc_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_model_to_json(model: *const DcModel, out: *mut *mut c_char) -> DcStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        if out.is_null() {
            return Err(arg("out is null"));
        }
        let text = model.inner.to_json()?;
        *out = CString::new(text)
            .map_err(|_| arg("model JSON contains NUL"))?
            .into_raw();
        Ok(())
    })
}

/// Write a model to a JSON file.
///
/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dc_model_save(model: *const DcModel, path: *const c_char) -> DcStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        model.inner.save(Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dc_model_free(model: *mut DcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of features the model expects, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dc_model_n_features(model: *const DcModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.n_features)
}

/// Number of trees, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dc_model_n_trees(model: *const DcModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.trees.len())
}

unsafe fn predict_into(
    model: *const DcModel,
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    out: *mut f64,
    time_scale: bool,
) -> DcStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let xs = slice_arg(x, rows_times_cols(n_rows, n_cols)?, "x")?;
        let dst = slice_out(out, n_rows, "out")?;
        let m = matrix(xs, n_rows, n_cols)?;
        let pred = if time_scale {
            depcens::booster::predict_time(&model.inner, &m)?
        } else {
            depcens::booster::predict(&model.inner, &m)?
        };
        dst.copy_from_slice(&pred);
        Ok(())
    })
}

/// Predicted log times for `n_rows` rows, written to `out[0..n_rows]`.
///
/// # Safety
/// `x` must hold `n_rows * n_cols` values and `out` room for `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn dc_model_predict(
    model: *const DcModel,
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    out: *mut f64,
) -> DcStatus {
    predict_into(model, x, n_rows, n_cols, out, false)
}

/// Predicted event times, `exp` of [`dc_model_predict`].
///
/// # Safety
/// As for [`dc_model_predict`].
#[no_mangle]
pub unsafe extern "C" fn dc_model_predict_time(
    model: *const DcModel,
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    out: *mut f64,
) -> DcStatus {
    predict_into(model, x, n_rows, n_cols, out, true)
}

/// Harrell's concordance index of predicted times against observed
/// `(time, event)` pairs.
///
/// # Safety
/// Arrays must hold `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_concordance(
    time: *const f64,
    events: *const u8,
    predicted: *const f64,
    n: usize,
    out: *mut f64,
) -> DcStatus {
    guard(|| {
        if out.is_null() {
            return Err(arg("out is null"));
        }
        let t = slice_arg(time, n, "time")?;
        let e: Vec<bool> = slice_arg(events, n, "events")?.iter().map(|&b| b != 0).collect();
        let p = slice_arg(predicted, n, "predicted")?;
        *out = depcens::metrics::concordance(t, &e, p)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn panics_become_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, DcStatus::Panic);
        let msg = unsafe { CStr::from_ptr(dc_last_error()) }.to_str().unwrap();
        assert!(msg.contains("boom"));
    }

    #[test]
    fn error_kinds_map_to_distinct_codes() {
        let errs = [
            Error::Domain(String::new()),
            Error::Shape(String::new()),
            Error::Config(String::new()),
            Error::Data(String::new()),
            Error::Numeric(String::new()),
            Error::Persistence(String::new()),
            Error::UndefinedMetric(String::new()),
            Error::io("x", std::io::Error::other("y")),
        ];
        let mut codes: Vec<i32> = errs.iter().map(|e| status_of(e) as i32).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), errs.len());
        assert!(!codes.contains(&0));
    }

    #[test]
    fn unknown_family_is_rejected() {
        let mut out = ptr::null_mut();
        let s = unsafe { dc_loss_independent_new(7, 1.0, &mut out) };
        assert_eq!(s, DcStatus::InvalidArgument);
        assert!(out.is_null());
    }

    #[test]
    fn null_out_pointer_is_rejected() {
        let s = unsafe { dc_loss_independent_new(DcBaselineFamily::Normal as i32, 1.0, ptr::null_mut()) };
        assert_eq!(s, DcStatus::InvalidArgument);
    }
}
