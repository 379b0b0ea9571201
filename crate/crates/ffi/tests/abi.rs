use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use bsl_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe { bsl_last_error(buf.as_mut_ptr(), buf.len(), ptr::null_mut()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn spectrum_handle_round_trip() {
    let cfg = CString::new(
        r#"{"space":{"kind":"standard-bergman","alpha":0},
            "measure":{"type":"restriction","base":{"type":"radial","profile":{"type":"constant","value":1}},
                       "region":{"type":"disc","radius":0.5}},
            "dimension":16}"#,
    )
    .unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { bsl_spectrum_compute(cfg.as_ptr(), &mut h) }, BslStatus::Ok);
    let n = unsafe { bsl_spectrum_len(h) };
    assert_eq!(n, 16);
    let mut vals = vec![0.0; n];
    assert_eq!(unsafe { bsl_spectrum_values(h, vals.as_mut_ptr(), n) }, BslStatus::Ok);
    for (k, v) in vals.iter().enumerate() {
        let exact = 0.5f64.powi(2 * k as i32 + 2);
        assert!(((v - exact) / exact).abs() < 1e-10);
    }
    let mut x = 0.0;
    assert_eq!(unsafe { bsl_spectrum_get(h, 16, &mut x) }, BslStatus::OutOfRange);
    assert_eq!(unsafe { bsl_spectrum_values(h, vals.as_mut_ptr(), 3) }, BslStatus::BufferTooSmall);
    unsafe { bsl_spectrum_free(h) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut h = ptr::null_mut();
    let bad = CString::new("{not json").unwrap();
    assert_eq!(unsafe { bsl_spectrum_compute(bad.as_ptr(), &mut h) }, BslStatus::Schema);
    assert!(h.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { bsl_spectrum_compute(ptr::null(), &mut h) }, BslStatus::NullArgument);
    let unknown = CString::new(r#"{"space":{"kind":"fock","alpha":1},"measure":{"type":"atoms","atoms":[]},"dimension":4,"x":1}"#).unwrap();
    assert_eq!(unsafe { bsl_spectrum_compute(unknown.as_ptr(), &mut h) }, BslStatus::Schema);
}

#[test]
fn predictor_matches_closed_form() {
    let profile = CString::new(r#"{"family":"kappa-log","kappa":3.141592653589793}"#).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { bsl_predictor_new(profile.as_ptr(), 1.0, &mut p) }, BslStatus::Ok);
    let (mut a, mut b) = (0.0, 0.0);
    unsafe {
        assert_eq!(bsl_predictor_eval(p, 1e4, &mut a), BslStatus::Ok);
        assert_eq!(bsl_predictor_eval(p, 1e6, &mut b), BslStatus::Ok);
    }
    // s_n·√n stays within a factor 2
    let (qa, qb) = (a * 1e2, b * 1e3);
    assert!(qa.max(qb) / qa.min(qb) < 2.0);
    unsafe { bsl_predictor_free(p) };

    let power = CString::new(r#"{"family":"power","q":0.5}"#).unwrap();
    assert_eq!(unsafe { bsl_predictor_new(power.as_ptr(), 1.0, &mut p) }, BslStatus::Ok);
    assert_eq!(unsafe { bsl_predictor_eval(p, 100.0, &mut a) }, BslStatus::NoValue);
    unsafe { bsl_predictor_free(p) };
    assert_eq!(unsafe { bsl_predictor_new(power.as_ptr(), -1.0, &mut p) }, BslStatus::InvalidParameter);
}

#[test]
fn run_experiment_reports_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CString::new(r#"{"experiment":"wos","domain":{"domain":"disc"},"level":2,"walks":2000,"seed":7}"#).unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut needed = 0usize;
    let mut buf = vec![0 as c_char; 1024];
    let st = unsafe { bsl_run_experiment(cfg.as_ptr(), out.as_ptr(), buf.as_mut_ptr(), buf.len(), &mut needed) };
    assert_eq!(st, BslStatus::Ok, "{}", last_error());
    let path = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_owned();
    assert_eq!(needed, path.len() + 1);
    assert!(PathBuf::from(path).exists());
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/bsl.h");
    let text = std::fs::read_to_string(&header).expect("header generated by build.rs");
    for name in ["bsl_spectrum_compute", "bsl_predictor_eval", "bsl_run_experiment", "BSL_STATUS_OK", "BslSpectrum"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    // Syntax-check the header with the system C compiler when one is present.
    if let Ok(out) = std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
