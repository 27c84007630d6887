use std::ffi::c_char;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use thermal_kms_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { tk_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    let bytes: Vec<u8> = buf.iter().take_while(|&&c| c != 0).map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn params(beta: f64, mass: f64) -> *mut TkParams {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { tk_params_new(beta, mass, &mut p) }, TkStatus::Ok);
    assert!(!p.is_null());
    p
}

#[test]
fn values_match_the_library() {
    let p = params(1.0, 1.0);
    let mut f1 = 0.0;
    assert_eq!(unsafe { tk_phi2_f1(p, 0.5, &mut f1) }, TkStatus::Ok);
    let par = thermal_kms::propagators::ThermalParams::new(1.0, 1.0).unwrap();
    assert_eq!(f1, thermal_kms::casestudies::phi2_f1_hat(0.5, &par).unwrap());

    let mut w = TkEstimate::default();
    assert_eq!(unsafe { tk_wightman(p, 0.3, -0.2, 0.4, &mut w) }, TkStatus::Ok);
    let lib = thermal_kms::propagators::wightman_mixed(0.3, -0.2, 0.4, &par).unwrap();
    assert_eq!((w.re, w.im), (lib.re, lib.im));

    let mut s = 0.0;
    assert_eq!(unsafe { tk_matsubara_sum_closed(p, 0.5, 0.0, &mut s) }, TkStatus::Ok);
    // (β/2ω) coth(βω/2) at u = β/2 is (β/2ω)/sinh(βω/2)
    assert!((s - 0.5 / (0.5f64).sinh()).abs() < 1e-14);

    let mut c = ptr::null_mut();
    assert_eq!(unsafe { tk_cutoff_new(TkCutoffKind::RaisedCosine, 1.0, 0.0, 1.0, &mut c) }, TkStatus::Ok);
    let p2 = params(1.0, 2.0);
    let mut f2 = TkEstimate::default();
    assert_eq!(unsafe { tk_phi3_f2(p2, c, &mut f2) }, TkStatus::Ok);
    assert!(f2.re > 0.0 && f2.error < 1e-3 * f2.re);
    unsafe {
        tk_cutoff_free(c);
        tk_params_free(p2);
        tk_params_free(p);
    }
}

#[test]
fn thermal_mass_and_graph_counts() {
    let p = params(1.0, 1e-4);
    let mut m2 = TkEstimate::default();
    assert_eq!(unsafe { tk_thermal_mass(p, &mut m2) }, TkStatus::Ok);
    assert!((m2.re - 1.0 / 12.0).abs() < 1e-3 / 12.0);
    unsafe { tk_params_free(p) };

    let degrees = [1u32, 1, 3, 3];
    let (mut n, mut weight) = (0usize, 0.0f64);
    assert_eq!(unsafe { tk_count_graphs(degrees.as_ptr(), 4, &mut n, &mut weight) }, TkStatus::Ok);
    assert_eq!(n, 2);
    assert_eq!(weight, 1.0);
}

#[test]
fn failures_report_status_and_message() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { tk_params_new(-1.0, 1.0, &mut p) }, TkStatus::Domain);
    assert!(p.is_null());
    assert!(last_error().contains("beta"));

    let p = params(1.0, 1.0);
    let mut v = TkEstimate { re: 7.0, im: 7.0, error: 7.0 };
    assert_eq!(unsafe { tk_thermal(p, 0.0, 0.0, 1.0, &mut v) }, TkStatus::Singular);
    assert_eq!(v.re, 7.0, "out untouched on failure");
    assert_eq!(unsafe { tk_wightman(ptr::null(), 0.0, 0.0, 1.0, &mut v) }, TkStatus::NullPointer);
    assert!(last_error().contains("params"));
    assert_eq!(unsafe { tk_phi2_f1(p, 0.5, ptr::null_mut()) }, TkStatus::NullPointer);

    let odd = [1u32, 2];
    let (mut n, mut w) = (0usize, 0.0);
    assert_eq!(unsafe { tk_count_graphs(odd.as_ptr(), 2, &mut n, &mut w) }, TkStatus::NoGraph);
    assert_eq!(unsafe { tk_params_set(p, 1.0, f64::NAN) }, TkStatus::Domain);
    unsafe { tk_params_free(p) };

    // truncation keeps the terminator and still returns the full length
    let mut small = [0 as c_char; 4];
    let full = unsafe { tk_last_error(small.as_mut_ptr(), small.len()) };
    assert!(full > 3);
    assert_eq!(small[3], 0);
}

#[test]
fn header_compiles_and_links_from_c() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = crate_dir.join("include/thermal_kms.h");
    assert!(header.exists());
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let archive = profile_dir.join("libthermal_kms_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !archive.exists() {
        eprintln!("skipping C link check: no C compiler or no static archive at {}", archive.display());
        return;
    }
    let src = crate_dir.join("tests/smoke.c");
    let exe = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("tk_smoke");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(crate_dir.join("include"))
        .arg(&src)
        .arg(&archive)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
