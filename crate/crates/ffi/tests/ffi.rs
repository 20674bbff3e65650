use std::ffi::CString;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use mechkit::io::serialize_mechanism;
use mechkit::mechanisms;
use mechkit_ffi::*;

fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn load(text: &str) -> *mut MechModel {
    let c = CString::new(text).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { mech_model_load(c.as_ptr(), &mut m) }, MechStatus::Ok);
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let mut buf = vec![0u8; 256];
    let len = unsafe { mech_last_error(buf.as_mut_ptr().cast(), buf.len()) };
    buf.truncate(len.min(255));
    String::from_utf8(buf).unwrap()
}

#[test]
fn crank_round_trip_through_the_abi() {
    let m = load(&serialize_mechanism(&mechanisms::crank()));
    let (mut n, mut p, mut nv, mut nc) = (0, 0, 0, 0);
    unsafe {
        assert_eq!(mech_model_dims(m, &mut n, &mut p, &mut nv, &mut nc), MechStatus::Ok);
        assert_eq!((n, p, nv, nc), (3, 2, 3, 0));
        let mut theta = [0.0; 3];
        assert_eq!(mech_close(m, [0.01].as_ptr(), 1, theta.as_mut_ptr(), 3), MechStatus::Ok);
        let mut err = 1.0;
        assert_eq!(mech_closure_error(m, theta.as_ptr(), 3, &mut err), MechStatus::Ok);
        assert!(err < 1e-10);
        let mut qu = [0.0; 2];
        assert_eq!(mech_dfk(m, theta.as_ptr(), 3, [0.1].as_ptr(), 1, qu.as_mut_ptr(), 2), MechStatus::Ok);
        // d = r cos(psi) + sqrt(l^2 - r^2 sin^2 psi) shrinks as the crank turns toward the slider
        assert!(qu[0] < 0.0);
        let mut mm = [0.0; 9];
        assert_eq!(mech_mass_matrix(m, theta.as_ptr(), 3, mm.as_mut_ptr(), 9), MechStatus::Ok);
        for i in 0..3 {
            assert!(mm[4 * i] > 0.0);
            for j in 0..3 {
                assert!((mm[3 * i + j] - mm[3 * j + i]).abs() < 1e-12);
            }
        }
        mech_model_free(m);
    }
}

#[test]
fn failures_set_status_and_message() {
    let m = load(&serialize_mechanism(&mechanisms::crank()));
    unsafe {
        let mut theta = [0.0; 3];
        assert_eq!(mech_close(m, [0.01, 0.0].as_ptr(), 2, theta.as_mut_ptr(), 3), MechStatus::DimensionMismatch);
        assert!(last_error().contains("qa"), "{}", last_error());
        assert_eq!(mech_close(ptr::null(), [0.01].as_ptr(), 1, theta.as_mut_ptr(), 3), MechStatus::NullPointer);
        assert_eq!(mech_close(m, ptr::null(), 1, theta.as_mut_ptr(), 3), MechStatus::NullPointer);
        mech_model_free(m);
        mech_model_free(ptr::null_mut());

        let bad = CString::new("format: 1\nlink a {\n  mass 1\n}\n").unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(mech_model_load(bad.as_ptr(), &mut out), MechStatus::ParseError);
        assert!(out.is_null());
        assert!(last_error().starts_with("syntax_error"), "{}", last_error());

        let mut tiny = [0u8; 4];
        let full = mech_last_error(tiny.as_mut_ptr().cast(), tiny.len());
        assert!(full > 3);
        assert_eq!(tiny[3], 0);
    }
}

#[test]
fn estimator_handle_tracks_a_sine() {
    let m = load(&serialize_mechanism(&mechanisms::crank()));
    unsafe {
        let mut est = ptr::null_mut();
        assert_eq!(mech_estimator_new(m, 1.0, 1000.0, 1e-3, &mut est), MechStatus::Ok);
        // the estimator owns its model copy
        mech_model_free(m);
        let mut theta = [0.0; 3];
        let mut err = 0.0;
        let w = 2.0 * std::f64::consts::PI;
        for k in 0..2000 {
            let t = k as f64 * 1e-3;
            let (q, qd) = (0.015 * (w * t).sin(), 0.015 * w * (w * t).cos());
            assert_eq!(mech_estimator_step(est, [q].as_ptr(), [qd].as_ptr(), 1, theta.as_mut_ptr(), 3, &mut err), MechStatus::Ok);
        }
        assert!(err <= 1e-3, "{err}");
        let mut bad = ptr::null_mut();
        let m2 = load(&serialize_mechanism(&mechanisms::crank()));
        assert_eq!(mech_estimator_new(m2, 1.0, 5000.0, 1e-3, &mut bad), MechStatus::DomainError);
        assert!(bad.is_null());
        mech_model_free(m2);
        mech_estimator_free(est);
    }
}

#[test]
fn ballscrew_and_static_wrench() {
    let f = mech_ballscrew_force(0.1, 0.95, 1.0);
    assert_eq!(f, 2.0 * std::f64::consts::PI * 0.95 / 0.1);
    let mut doc = mechanisms::minileg();
    doc.contacts.retain(|c| c.name == "l_c0" || c.name == "r_c0");
    let m = load(&serialize_mechanism(&doc));
    unsafe {
        let (mut n, mut p, mut nc) = (0, 0, 0);
        mech_model_dims(m, &mut n, &mut p, ptr::null_mut(), &mut nc);
        assert_eq!(nc, 2);
        let mut theta = vec![0.0; n];
        assert_eq!(mech_model_home(m, theta.as_mut_ptr(), n), MechStatus::Ok);
        let tau = vec![0.0; n - p];
        let mut forces = vec![0.0; 6];
        assert_eq!(mech_static_wrench(m, theta.as_ptr(), n, tau.as_ptr(), n - p, forces.as_mut_ptr(), 6), MechStatus::Ok);
        assert!(forces.iter().all(|x| x.is_finite()));
        assert_eq!(mech_static_wrench(m, theta.as_ptr(), n, tau.as_ptr(), n - p, forces.as_mut_ptr(), 5), MechStatus::DimensionMismatch);
        mech_model_free(m);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(manifest().join("include/mechkit.h")).unwrap();
    let src = std::fs::read_to_string(manifest().join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|r| r.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 12);
    for f in exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct MechModel MechModel;"));
    assert!(header.contains("MECH_STATUS_OK = 0"));
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn c_program_links_against_the_static_library() {
    if !have_cc() {
        eprintln!("no C compiler; skipped");
        return;
    }
    let exe = std::env::current_exe().unwrap();
    let profile = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile.join("libmechkit_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest().join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest().join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let fixture = manifest().join("../core/fixtures/crank.mech");
    let out = Command::new(&bin).arg(fixture).output().unwrap();
    assert!(out.status.success(), "{:?}", out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("n=3 m=2 nv=3 err<1e-10=1 bad=4 msg=qa"), "{text}");
}

