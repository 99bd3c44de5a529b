use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use qbspde_ffi::*;

const HEADER: &str = include_str!("../include/qbspde.h");

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn preset_solve_roundtrip() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { qbs_problem_from_preset(cstr("heat_eigenmode").as_ptr(), &mut p) }, QbsStatus::Ok);
    let opts = QbsSolveOptions {
        nx: 21,
        nt: 20,
        ..Default::default()
    };
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { qbs_solve(p, &opts, &mut s) }, QbsStatus::Ok);
    let mut dims = QbsDims::default();
    assert_eq!(unsafe { qbs_solution_dims(s, &mut dims) }, QbsStatus::Ok);
    assert_eq!((dims.dim, dims.n_levels, dims.n_space, dims.n_w, dims.d0), (1, 21, 21, 1, 1));
    let n = dims.n_levels * dims.n_space * dims.n_w;
    let mut u = vec![0.0; n];
    assert_eq!(unsafe { qbs_solution_copy_u(s, u.as_mut_ptr(), n - 1) }, QbsStatus::BufferTooSmall);
    assert_eq!(unsafe { qbs_solution_copy_u(s, u.as_mut_ptr(), n) }, QbsStatus::Ok);
    // the terminal level is sin(pi x); the middle node is x = 1/2
    assert!((u[20 * 21 + 10] - 1.0).abs() < 1e-12);
    assert!(u[10] > 0.0 && u[10] < 1.0);
    let mut q = vec![1.0; n * dims.d0];
    assert_eq!(unsafe { qbs_solution_copy_q(s, q.as_mut_ptr(), q.len()) }, QbsStatus::Ok);
    assert!(q.iter().all(|&v| v == 0.0));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.csv");
    let cpath = cstr(path.to_str().unwrap());
    assert_eq!(unsafe { qbs_solution_write(s, cpath.as_ptr()) }, QbsStatus::Ok);
    let back = qbspde::io::read_solution(&path).unwrap();
    assert_eq!(back.u, u);
    let bad = cstr("/nonexistent/dir/u.csv");
    assert_eq!(unsafe { qbs_solution_write(s, bad.as_ptr()) }, QbsStatus::Io);
    unsafe {
        qbs_solution_free(s);
        qbs_problem_free(p);
    }
}

#[test]
fn json_problem() {
    let doc = r#"{"d": 1, "d0": 1, "horizon": 0.1, "lo": [0.0], "hi": [1.0],
        "a": {"scaled_identity": 0.5}, "sigma": "zero", "f": "zero",
        "phi": {"sine_mode": {"amplitude": 1.0, "modes": [1.0]}},
        "mode": "deterministic"}"#;
    let mut p = ptr::null_mut();
    let st = unsafe { qbs_problem_from_json(cstr(doc).as_ptr(), &mut p) };
    let err = unsafe { CStr::from_ptr(qbs_last_error()) }.to_string_lossy().into_owned();
    assert_eq!(st, QbsStatus::Ok, "{err}");
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { qbs_solve(p, ptr::null(), &mut s) }, QbsStatus::Ok);
    unsafe {
        qbs_solution_free(s);
        qbs_problem_free(p);
    }
    let mut p2 = ptr::null_mut();
    assert_eq!(unsafe { qbs_problem_from_json(cstr("{\"d\": 1, \"bogus\": 2}").as_ptr(), &mut p2) }, QbsStatus::InvalidArgument);
    assert!(p2.is_null());
}

#[test]
fn scalar_helpers() {
    let mut out = 0.0;
    assert_eq!(unsafe { qbs_linf_bound(0.0, 1.0, 0.0, 2.0, 1.0, &mut out) }, QbsStatus::Ok);
    assert!((out - 3.0).abs() < 1e-12);
    assert_eq!(unsafe { qbs_linf_bound(2.0, 1.0, 0.0, 2.0, 1.0, &mut out) }, QbsStatus::InvalidArgument);

    let v = [0.0, 1.0, -0.5];
    let r = [1.0, 2.0, 0.5];
    let (mut u, mut q) = ([0.0; 3], [0.0; 3]);
    assert_eq!(unsafe { qbs_exp_inverse(v.as_ptr(), r.as_ptr(), 3, 2.0, u.as_mut_ptr(), q.as_mut_ptr()) }, QbsStatus::Ok);
    for i in 0..3 {
        assert!((u[i] - (1.0 + v[i]).ln() / 2.0).abs() < 1e-15);
        assert!((q[i] - r[i] / (2.0 * (1.0 + v[i]))).abs() < 1e-15);
    }
    let bad = [-1.5];
    assert_eq!(unsafe { qbs_exp_inverse(bad.as_ptr(), r.as_ptr(), 1, 2.0, u.as_mut_ptr(), q.as_mut_ptr()) }, QbsStatus::InvalidArgument);

    let (mut beta, mut b, mut margin) = (0.0, 0.0, 0.0);
    let st = unsafe { qbs_choose_beta_b(0.5, 1.0, 0.5, &mut beta, &mut b, &mut margin) };
    assert_eq!(st, QbsStatus::Ok, "{:?}", unsafe { CStr::from_ptr(qbs_last_error()) });
    assert!(beta > 0.0 && b > 1.0 && margin <= -1e-6);
}

#[test]
fn run_json_reports() {
    let mut out = ptr::null_mut();
    let req = cstr(r#"{"command": "list-presets", "config": {"filter": "heat"}}"#);
    assert_eq!(unsafe { qbs_run_json(req.as_ptr(), &mut out) }, QbsStatus::Ok);
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { qbs_string_free(out) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["command"], "list-presets");
    assert_eq!(v["data"].as_array().unwrap().len(), 3);

    let req = cstr(r#"{"command": "estimate", "config": {"preset": "heat_eigenmode", "check": "linf", "nx": 21, "nt": 20}}"#);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { qbs_run_json(req.as_ptr(), &mut out) }, QbsStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(out) }.to_str().unwrap()).unwrap();
    unsafe { qbs_string_free(out) };
    assert_eq!(v["verdicts"][0]["pass"], true);

    let mut out = ptr::null_mut();
    let req = cstr(r#"{"command": "solve", "config": {"preset": "missing"}}"#);
    assert_eq!(unsafe { qbs_run_json(req.as_ptr(), &mut out) }, QbsStatus::UnknownPreset);
    assert!(out.is_null());
    assert_eq!(unsafe { qbs_run_json(ptr::null(), &mut out) }, QbsStatus::NullPointer);
}

#[test]
fn header_declares_every_export() {
    for f in [
        "qbs_last_error",
        "qbs_version",
        "qbs_problem_from_preset",
        "qbs_problem_from_json",
        "qbs_problem_free",
        "qbs_solve",
        "qbs_solution_free",
        "qbs_solution_dims",
        "qbs_solution_copy_u",
        "qbs_solution_copy_q",
        "qbs_solution_write",
        "qbs_mu0",
        "qbs_linf_bound",
        "qbs_exp_inverse",
        "qbs_choose_beta_b",
        "qbs_run_json",
        "qbs_string_free",
    ] {
        assert!(HEADER.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(HEADER.contains("typedef struct QbsProblem QbsProblem;"));
    assert!(HEADER.contains("QBS_STATUS_OK = 0"));
    let v = unsafe { CStr::from_ptr(qbs_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = ["cc", "gcc", "clang"].into_iter().find(|c| Command::new(c).arg("--version").output().is_ok()) else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        r#"#include "qbspde.h"
int main(void) {
    QbsProblem *p = NULL;
    QbsSolution *s = NULL;
    QbsSolveOptions o = {0};
    QbsDims d;
    if (qbs_problem_from_preset("heat_eigenmode", &p) != QBS_STATUS_OK) return 1;
    if (qbs_solve(p, &o, &s) != QBS_STATUS_OK) return 2;
    qbs_solution_dims(s, &d);
    qbs_solution_free(s);
    qbs_problem_free(p);
    return (int)d.n_levels == 0;
}
"#,
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include])
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
