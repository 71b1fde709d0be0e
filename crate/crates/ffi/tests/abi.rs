use std::ffi::{c_char, CStr, CString};
use std::ptr;

use subdiff_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        subdiff_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn builtin(name: &str) -> *mut SubdiffScenario {
    let name = CString::new(name).unwrap();
    let mut sc = ptr::null_mut();
    let s = unsafe { subdiff_scenario_builtin(name.as_ptr(), &mut sc) };
    assert_eq!(s, SubdiffStatus::Ok, "{}", last_error());
    sc
}

#[test]
fn version_is_cargo_version() {
    let v = unsafe { CStr::from_ptr(subdiff_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn mittag_leffler_matches_exponential() {
    let mut out = 0.0;
    let s = unsafe { subdiff_mittag_leffler(1.0, 1.0, 2.0, &mut out) };
    assert_eq!(s, SubdiffStatus::Ok);
    assert!((out - (-2.0f64).exp()).abs() < 1e-13);
    let s = unsafe { subdiff_mittag_leffler(1.5, 1.0, 2.0, &mut out) };
    assert_eq!(s, SubdiffStatus::Condition);
    assert!(last_error().contains("alpha"));
    let s = unsafe { subdiff_mittag_leffler(0.5, 1.0, 1.0, ptr::null_mut()) };
    assert_eq!(s, SubdiffStatus::NullPointer);
}

#[test]
fn unknown_builtin_is_config_error() {
    let name = CString::new("nope").unwrap();
    let mut sc = ptr::null_mut();
    let s = unsafe { subdiff_scenario_builtin(name.as_ptr(), &mut sc) };
    assert_eq!(s, SubdiffStatus::Config);
    assert!(sc.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn bad_toml_names_missing_field() {
    let text = CString::new("name = \"x\"\n").unwrap();
    let mut sc = ptr::null_mut();
    let s = unsafe { subdiff_scenario_from_toml(text.as_ptr(), &mut sc) };
    assert_eq!(s, SubdiffStatus::Config);
    assert!(last_error().contains("alpha"), "{}", last_error());
}

#[test]
fn null_handles_are_rejected() {
    let mut n = 0usize;
    unsafe {
        assert_eq!(
            subdiff_scenario_nx(ptr::null(), &mut n),
            SubdiffStatus::NullPointer
        );
        assert_eq!(
            subdiff_run_len(ptr::null(), &mut n),
            SubdiffStatus::NullPointer
        );
        subdiff_scenario_free(ptr::null_mut());
        subdiff_run_free(ptr::null_mut());
    }
}

#[test]
fn override_and_condition_error() {
    let sc = builtin("linear-heat");
    let good = CString::new("domain.nx=51").unwrap();
    let bad = CString::new("operator.D=-1").unwrap();
    unsafe {
        assert_eq!(subdiff_scenario_set(sc, good.as_ptr()), SubdiffStatus::Ok);
        let mut nx = 0;
        subdiff_scenario_nx(sc, &mut nx);
        assert_eq!(nx, 51);
        assert_eq!(subdiff_scenario_set(sc, bad.as_ptr()), SubdiffStatus::Ok);
        let mut buf = vec![0.0; 51];
        let s = subdiff_scenario_steady(sc, buf.as_mut_ptr(), buf.len());
        assert_eq!(s, SubdiffStatus::Condition, "{}", last_error());
        subdiff_scenario_free(sc);
    }
}

#[test]
fn heat_run_decays_and_passes() {
    let sc = builtin("linear-heat");
    let set = CString::new("time.nt=400").unwrap();
    unsafe {
        assert_eq!(subdiff_scenario_set(sc, set.as_ptr()), SubdiffStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(
            subdiff_run(sc, &mut run),
            SubdiffStatus::Ok,
            "{}",
            last_error()
        );
        let mut n = 0;
        subdiff_run_len(run, &mut n);
        assert_eq!(n, 401);
        let mut t = vec![0.0; n];
        let mut e = vec![0.0; n];
        assert_eq!(subdiff_run_times(run, t.as_mut_ptr(), n), SubdiffStatus::Ok);
        assert_eq!(subdiff_run_l2_sq(run, e.as_mut_ptr(), n), SubdiffStatus::Ok);
        assert_eq!(t[0], 0.0);
        assert!((t[n - 1] - 1.0).abs() < 1e-12);
        assert!(e[n - 1] < 1e-6 * e[0]);
        assert_eq!(
            subdiff_run_times(run, t.as_mut_ptr(), n - 1),
            SubdiffStatus::BufferTooSmall
        );
        let mut nx = 0;
        subdiff_scenario_nx(sc, &mut nx);
        let mut u = vec![0.0; nx];
        assert_eq!(
            subdiff_run_state(run, 0, u.as_mut_ptr(), nx),
            SubdiffStatus::Ok
        );
        assert_eq!(
            subdiff_run_state(run, n, u.as_mut_ptr(), nx),
            SubdiffStatus::OutOfRange
        );
        let mut verdict = SubdiffVerdict::Abstain;
        let mut rate = 0.0;
        assert_eq!(
            subdiff_run_decay(run, &mut verdict, &mut rate),
            SubdiffStatus::Ok
        );
        assert_eq!(verdict, SubdiffVerdict::Pass);
        let target = 2.0 * (1.0 + std::f64::consts::PI.powi(2));
        assert!((rate - target).abs() < 0.05 * target, "rate {rate}");
        subdiff_run_free(run);
        subdiff_scenario_free(sc);
    }
}

#[test]
fn header_declares_every_export() {
    let h =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/subdiff.h")).unwrap();
    for f in [
        "subdiff_last_error",
        "subdiff_version",
        "subdiff_mittag_leffler",
        "subdiff_scenario_builtin",
        "subdiff_scenario_from_toml",
        "subdiff_scenario_set",
        "subdiff_scenario_nx",
        "subdiff_scenario_steady",
        "subdiff_scenario_free",
        "subdiff_run",
        "subdiff_run_len",
        "subdiff_run_times",
        "subdiff_run_l2_sq",
        "subdiff_run_state",
        "subdiff_run_decay",
        "subdiff_run_free",
        "typedef struct SubdiffScenario SubdiffScenario",
        "SUBDIFF_STATUS_OK = 0",
    ] {
        assert!(h.contains(f), "header lacks {f}");
    }
}
