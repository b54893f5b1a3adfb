use std::ffi::{CStr, CString};
use std::ptr;

use nalgebra::DMatrix;
use regpack_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(regpack_last_error()) }.to_string_lossy().into_owned()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(regpack_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn builtin_run_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(regpack_scenario_builtin(c("rlc-nominal").as_ptr(), &mut s), RegpackStatus::Ok);
        for kv in ["regulator=full_information", "grid.horizon=8", "grid.step=2e-3", "gates.tail_relative_error=0.5"] {
            assert_eq!(regpack_scenario_set(s, c(kv).as_ptr()), RegpackStatus::Ok, "{kv}: {}", last_error());
        }
        // A bad override leaves the handle usable.
        assert_eq!(regpack_scenario_set(s, c("grid.nonsense=1").as_ptr()), RegpackStatus::Parse);
        assert!(!last_error().is_empty());

        let mut r = ptr::null_mut();
        let out = c(dir.path().to_str().unwrap());
        assert_eq!(regpack_run(s, out.as_ptr(), 1, &mut r), RegpackStatus::Ok, "{}", last_error());
        assert_eq!(last_error(), "");
        let mut passed = -1;
        assert_eq!(regpack_report_passed(r, &mut passed), RegpackStatus::Ok);
        assert_eq!(passed, 1);
        let mut tail = f64::NAN;
        assert_eq!(regpack_report_tail_error(r, &mut tail), RegpackStatus::Ok);
        assert!(tail.is_finite() && tail < 0.5);

        let json = CStr::from_ptr(regpack_report_metrics_json(r)).to_str().unwrap();
        let m: serde_json::Value = serde_json::from_str(json).unwrap();
        assert_eq!(m["regulator"], "full_information");
        assert_eq!(m["regulation"]["tail_relative_error"].as_f64().unwrap(), tail);
        assert!(dir.path().join("metrics.json").is_file());
        assert!(!dir.path().join("closedloop.csv").exists());

        regpack_report_free(r);
        regpack_scenario_free(s);
    }
}

#[test]
fn errors_are_reported() {
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(regpack_scenario_parse(c("name = [").as_ptr(), &mut s), RegpackStatus::Parse);
        assert!(s.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(regpack_scenario_builtin(c("nope").as_ptr(), &mut s), RegpackStatus::InvalidArgument);
        assert!(last_error().contains("nope"));
        assert_eq!(regpack_scenario_parse(ptr::null(), &mut s), RegpackStatus::InvalidArgument);
        assert_eq!(regpack_scenario_set(ptr::null_mut(), c("a=1").as_ptr()), RegpackStatus::InvalidArgument);
        let mut passed = 0;
        assert_eq!(regpack_report_passed(ptr::null(), &mut passed), RegpackStatus::InvalidArgument);
        assert!(regpack_report_metrics_json(ptr::null()).is_null());
        regpack_scenario_free(ptr::null_mut());
        regpack_report_free(ptr::null_mut());
    }
}

#[test]
fn unstable_regulator_is_numerical() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(regpack_scenario_builtin(c("rlc-nominal").as_ptr(), &mut s), RegpackStatus::Ok);
        let kv = c("regulator.eigenvalues=[\"1\", \"-2\", \"-3\", \"-4\"]");
        assert_eq!(regpack_scenario_set(s, kv.as_ptr()), RegpackStatus::Ok, "{}", last_error());
        assert_eq!(regpack_scenario_set(s, c("grid.horizon=6").as_ptr()), RegpackStatus::Ok);
        let mut r = ptr::null_mut();
        let out = c(dir.path().to_str().unwrap());
        assert_eq!(regpack_run(s, out.as_ptr(), 1, &mut r), RegpackStatus::Numerical);
        assert!(r.is_null());
        assert!(last_error().contains("realization"), "{}", last_error());
        regpack_scenario_free(s);
    }
}

#[test]
fn place_poles_matches_characteristic_polynomial() {
    // Double integrator: A + b k has char poly s^2 - k2 s - k1.
    let a = [0.0, 1.0, 0.0, 0.0];
    let b = [0.0, 1.0];
    let re = [-1.0, -1.0];
    let im = [2.0, -2.0];
    let mut k = [0.0; 2];
    let st = unsafe { regpack_place_poles(a.as_ptr(), b.as_ptr(), 2, re.as_ptr(), im.as_ptr(), k.as_mut_ptr()) };
    assert_eq!(st, RegpackStatus::Ok, "{}", last_error());
    // (s + 1)^2 + 4 = s^2 + 2 s + 5
    assert!((k[0] + 5.0).abs() < 1e-10 && (k[1] + 2.0).abs() < 1e-10, "{k:?}");

    let st = unsafe { regpack_place_poles(a.as_ptr(), b.as_ptr(), 0, re.as_ptr(), im.as_ptr(), k.as_mut_ptr()) };
    assert_eq!(st, RegpackStatus::InvalidArgument);
}

#[test]
fn pinv_of_rank_one_matrix() {
    // u v^T with u = (1, 2, 2), v = (3, 4): pinv = v u^T / (|u|^2 |v|^2).
    let m = [3.0, 4.0, 6.0, 8.0, 6.0, 8.0];
    let mut out = [0.0; 6];
    let mut rank = 0usize;
    let st = unsafe { regpack_pinv(m.as_ptr(), 3, 2, 1e-12, out.as_mut_ptr(), &mut rank) };
    assert_eq!(st, RegpackStatus::Ok, "{}", last_error());
    assert_eq!(rank, 1);
    let got = DMatrix::from_row_slice(2, 3, &out);
    let want = DMatrix::from_row_slice(2, 3, &[3.0, 6.0, 6.0, 4.0, 8.0, 8.0]) / (9.0 * 25.0);
    assert!((got - want).norm() < 1e-14);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/regpack.h")).unwrap();
    for f in [
        "regpack_last_error",
        "regpack_version",
        "regpack_scenario_parse",
        "regpack_scenario_builtin",
        "regpack_scenario_set",
        "regpack_scenario_free",
        "regpack_run",
        "regpack_report_passed",
        "regpack_report_tail_error",
        "regpack_report_metrics_json",
        "regpack_report_free",
        "regpack_place_poles",
        "regpack_pinv",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct RegpackScenario RegpackScenario;"));
    assert!(header.contains("REGPACK_STATUS_NUMERICAL = 3"));
}
