//! C ABI over bsl-core.
//!
//! Every function returns a [`BslStatus`]; on failure the message is kept per thread and
//! can be copied out with [`bsl_last_error`]. Handles are opaque and must be released with
//! their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use bsl_core::experiment::{run, ExperimentConfig};
use bsl_core::measures::MeasureSpec;
use bsl_core::profile::{predict_singular_values, BoundaryProfile};
use bsl_core::spaces::WeightModel;
use bsl_core::toeplitz::{toeplitz_spectrum, SpectrumResult};
use bsl_core::BslError;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BslStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Schema = 3,
    InvalidParameter = 4,
    Numerical = 5,
    Io = 6,
    OutOfRange = 7,
    BufferTooSmall = 8,
    /// The prediction has no finite value (super-polynomial decay).
    NoValue = 9,
    Panic = 10,
}

/// Eigenvalues of a compressed Toeplitz operator.
pub struct BslSpectrum {
    inner: SpectrumResult,
}

/// Singular-value predictor for a boundary profile and a space parameter.
pub struct BslPredictor {
    profile: BoundaryProfile,
    alpha: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &BslError) -> BslStatus {
    match e {
        BslError::Schema(_) | BslError::Json(_) | BslError::Csv(_) => BslStatus::Schema,
        BslError::InvalidParameter(_)
        | BslError::PointOutsideDomain { .. }
        | BslError::RegularityNotDeclared(_)
        | BslError::SymbolNotEvaluable(_)
        | BslError::NonCompactProfile(_)
        | BslError::Capacity { .. } => BslStatus::InvalidParameter,
        BslError::IndexOutOfRange(_) => BslStatus::OutOfRange,
        BslError::Io(_) => BslStatus::Io,
        _ => BslStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (BslStatus, String)>) -> BslStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BslStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BslStatus::Panic
        }
    }
}

fn core_err(e: BslError) -> (BslStatus, String) {
    (status_of(&e), e.to_string())
}

fn schema_err(e: impl std::fmt::Display) -> (BslStatus, String) {
    (BslStatus::Schema, e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, (BslStatus, String)> {
    if p.is_null() {
        return Err((BslStatus::NullArgument, "null string argument".into()));
    }
    CStr::from_ptr(p).to_str().map_err(|e| (BslStatus::InvalidUtf8, e.to_string()))
}

fn null() -> (BslStatus, String) {
    (BslStatus::NullArgument, "null pointer argument".into())
}

/// Copies `s` (NUL-terminated) into `buf`; `needed` receives the required size including the NUL.
unsafe fn copy_out(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), (BslStatus, String)> {
    if !needed.is_null() {
        *needed = s.len() + 1;
    }
    if buf.is_null() || len < s.len() + 1 {
        return Err((BslStatus::BufferTooSmall, format!("need {} bytes", s.len() + 1)));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bsl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the calling thread's last error message into `buf`.
///
/// # Safety
/// `buf` must point to `len` writable bytes (or be null); `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn bsl_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> BslStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    match copy_out(&msg, buf, len, needed) {
        Ok(()) => BslStatus::Ok,
        Err((s, _)) => s,
    }
}

/// Computes the spectrum described by a JSON object {"space", "measure", "dimension"}.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsl_spectrum_compute(config_json: *const c_char, out: *mut *mut BslSpectrum) -> BslStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        *out = ptr::null_mut();
        let text = str_arg(config_json)?;
        let v: serde_json::Value = serde_json::from_str(text).map_err(schema_err)?;
        let obj = v.as_object().ok_or_else(|| schema_err("config must be an object"))?;
        if let Some(k) = obj.keys().find(|k| !["space", "measure", "dimension"].contains(&k.as_str())) {
            return Err(schema_err(format!("unknown key {k}")));
        }
        let field = |k: &str| obj.get(k).cloned().ok_or_else(|| schema_err(format!("missing key {k}")));
        let model: WeightModel = serde_json::from_value(field("space")?).map_err(schema_err)?;
        let mu: MeasureSpec = serde_json::from_value(field("measure")?).map_err(schema_err)?;
        let n: usize = serde_json::from_value(field("dimension")?).map_err(schema_err)?;
        let inner = toeplitz_spectrum(&model, &mu, n).map_err(core_err)?;
        *out = Box::into_raw(Box::new(BslSpectrum { inner }));
        Ok(())
    })
}

/// Number of eigenvalues held by the handle (0 for a null handle).
///
/// # Safety
/// `spectrum` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bsl_spectrum_len(spectrum: *const BslSpectrum) -> usize {
    spectrum.as_ref().map_or(0, |s| s.inner.eigenvalues.len())
}

/// Copies all eigenvalues (nonincreasing) into `buf`, which must hold at least `bsl_spectrum_len` doubles.
///
/// # Safety
/// `spectrum` must be a live handle and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bsl_spectrum_values(spectrum: *const BslSpectrum, buf: *mut f64, len: usize) -> BslStatus {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(null)?;
        if buf.is_null() {
            return Err(null());
        }
        let vals = &s.inner.eigenvalues;
        if len < vals.len() {
            return Err((BslStatus::BufferTooSmall, format!("need {} doubles", vals.len())));
        }
        ptr::copy_nonoverlapping(vals.as_ptr(), buf, vals.len());
        Ok(())
    })
}

/// Eigenvalue with 0-based index `i`.
///
/// # Safety
/// `spectrum` must be a live handle and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsl_spectrum_get(spectrum: *const BslSpectrum, i: usize, value: *mut f64) -> BslStatus {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(null)?;
        if value.is_null() {
            return Err(null());
        }
        *value = *s
            .inner
            .eigenvalues
            .get(i)
            .ok_or_else(|| (BslStatus::OutOfRange, format!("index {i} out of range")))?;
        Ok(())
    })
}

/// Releases a spectrum handle; null is ignored.
///
/// # Safety
/// `spectrum` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bsl_spectrum_free(spectrum: *mut BslSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

/// Creates a predictor from a boundary-profile JSON object, e.g. {"family":"kappa-log","kappa":3.14}.
///
/// # Safety
/// `profile_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsl_predictor_new(
    profile_json: *const c_char,
    alpha: f64,
    out: *mut *mut BslPredictor,
) -> BslStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        *out = ptr::null_mut();
        let profile: BoundaryProfile = serde_json::from_str(str_arg(profile_json)?).map_err(schema_err)?;
        profile.validate().map_err(core_err)?;
        if !(alpha > 0.0) {
            return Err((BslStatus::InvalidParameter, "alpha must be positive".into()));
        }
        *out = Box::into_raw(Box::new(BslPredictor { profile, alpha }));
        Ok(())
    })
}

/// Predicted s_n. Returns `NoValue` on the super-polynomial branch.
///
/// # Safety
/// `predictor` must be a live handle and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsl_predictor_eval(predictor: *const BslPredictor, n: f64, value: *mut f64) -> BslStatus {
    guard(|| {
        let p = predictor.as_ref().ok_or_else(null)?;
        if value.is_null() {
            return Err(null());
        }
        let pred = predict_singular_values(&p.profile, p.alpha, n).map_err(core_err)?;
        *value = pred
            .value
            .ok_or_else(|| (BslStatus::NoValue, "super-polynomial decay: no finite rate".to_string()))?;
        Ok(())
    })
}

/// Releases a predictor handle; null is ignored.
///
/// # Safety
/// `predictor` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bsl_predictor_free(predictor: *mut BslPredictor) {
    if !predictor.is_null() {
        drop(Box::from_raw(predictor));
    }
}

/// Runs an experiment config (JSON text) writing into `out_dir`; the report path is copied
/// into `report_path` when a buffer is given.
///
/// # Safety
/// String arguments must be NUL-terminated; `report_path` must be null or point to `len`
/// writable bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn bsl_run_experiment(
    config_json: *const c_char,
    out_dir: *const c_char,
    report_path: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> BslStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json(str_arg(config_json)?).map_err(core_err)?;
        let dir = str_arg(out_dir)?;
        let (_, path) = run(&cfg, Path::new(dir)).map_err(core_err)?;
        let path = path.to_string_lossy();
        if !report_path.is_null() {
            copy_out(&path, report_path, len, needed)?;
        } else if !needed.is_null() {
            *needed = path.len() + 1;
        }
        Ok(())
    })
}
