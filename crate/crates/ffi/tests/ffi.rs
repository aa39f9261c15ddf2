use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use uniformity_lab_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ul_last_error_message()) }.to_string_lossy().into_owned()
}

fn tester(kind: UlKind, beta: f64, n: usize, m: usize, eps: f64, tau: f64) -> *mut UlTester {
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { ul_tester_new(kind, beta, n, m, eps, tau, &mut t) }, UlStatus::Ok, "{}", last_error());
    t
}

#[test]
fn huber_decisions() {
    let t = tester(UlKind::Huber, 2.0, 4, 4, 0.5, 2.0);
    let mut d = UlDecision::Uniform;
    unsafe {
        assert_eq!(ul_decide(t, [4usize, 0, 0, 0].as_ptr(), 4, &mut d), UlStatus::Ok);
        assert_eq!(d, UlDecision::NonUniform);
        assert_eq!(ul_decide(t, [1usize, 1, 1, 1].as_ptr(), 4, &mut d), UlStatus::Ok);
        assert_eq!(d, UlDecision::Uniform);
        assert_eq!(ul_decide(t, [1usize, 1, 1].as_ptr(), 3, &mut d), UlStatus::InvalidParameter);
        assert!(!last_error().is_empty());
        ul_tester_free(t);
    }
}

#[test]
fn default_threshold_and_errors() {
    let t = tester(UlKind::EmptyBins, 0.0, 10, 10, 0.2, f64::NAN);
    let mut tau = 0.0;
    unsafe {
        assert_eq!(ul_tester_threshold(t, &mut tau), UlStatus::Ok);
        ul_tester_free(t);
    }
    assert!((tau - (-1.0f64).exp()).abs() < 1e-15);

    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(ul_tester_new(UlKind::Singletons, 0.0, 10, 10, 0.2, f64::NAN, &mut out), UlStatus::Unsupported);
        assert_eq!(ul_tester_new(UlKind::Squared, 0.0, 10, 10, 1.5, 2.0, &mut out), UlStatus::InvalidParameter);
        assert_eq!(ul_tester_new(UlKind::Squared, 0.0, 10, 10, 0.2, 2.0, ptr::null_mut()), UlStatus::NullPointer);
        assert!(last_error().contains("null"));
        ul_tester_free(ptr::null_mut());
        ul_dist_free(ptr::null_mut());
    }
    let mut tau = 0.0;
    assert_eq!(unsafe { ul_tester_threshold(ptr::null(), &mut tau) }, UlStatus::NullPointer);
}

#[test]
fn distributions_and_sampling() {
    let mut d = ptr::null_mut();
    unsafe {
        assert_eq!(ul_dist_new([0.5, 0.6].as_ptr(), 2, &mut d), UlStatus::InvalidParameter);
        assert_eq!(ul_dist_new([0.25, 0.75].as_ptr(), 2, &mut d), UlStatus::Ok);
        let mut a = [0usize; 2];
        let mut b = [0usize; 2];
        assert_eq!(ul_sample_histogram(d, 100, 7, a.as_mut_ptr(), 2), UlStatus::Ok);
        assert_eq!(ul_sample_histogram(d, 100, 7, b.as_mut_ptr(), 2), UlStatus::Ok);
        assert_eq!(a, b);
        assert_eq!(a[0] + a[1], 100);
        assert_eq!(ul_sample_histogram(d, 100, 7, a.as_mut_ptr(), 3), UlStatus::InvalidParameter);
        ul_dist_free(d);
        assert_eq!(ul_dist_flat(4, 0.2, 0.5, &mut d), UlStatus::Ok);
        ul_dist_free(d);
        assert_eq!(ul_dist_flat(4, 0.9, 0.5, &mut d), UlStatus::InvalidParameter);
    }
}

#[test]
fn estimates_agree_with_exact_rates() {
    let t = tester(UlKind::Collisions, 0.0, 4, 3, 0.3, 2.0);
    let (mut p, mut q) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(ul_dist_uniform(3, &mut p), UlStatus::Ok);
        assert_eq!(ul_dist_flat(3, 0.3, 0.5, &mut q), UlStatus::Ok);
        let (mut dm, mut dp) = (0.0, 0.0);
        assert_eq!(ul_exact_error_rates(t, p, q, &mut dm, &mut dp), UlStatus::Ok);
        let mut e = UlErrorEstimate::default();
        assert_eq!(ul_estimate_error(t, p, UlSide::Uniform, 20_000, 3, 2, &mut e), UlStatus::Ok);
        assert_eq!(e.trials, 20_000);
        let width = e.ci_high - e.ci_low;
        assert!((e.delta_hat - dm).abs() < 2.0 * width, "{e:?} vs {dm}");
        let mut e1 = UlErrorEstimate::default();
        assert_eq!(ul_estimate_error(t, p, UlSide::Uniform, 20_000, 3, 1, &mut e1), UlStatus::Ok);
        assert_eq!(e, e1);
        assert_eq!(ul_estimate_error(t, p, UlSide::Uniform, 0, 3, 1, &mut e1), UlStatus::InvalidParameter);
        ul_dist_free(p);
        ul_dist_free(q);
        ul_tester_free(t);
    }
}

#[test]
fn superlinear_tester() {
    let mut t = ptr::null_mut();
    let mut d = UlDecision::Uniform;
    unsafe {
        assert_eq!(ul_tester_new_superlinear_tv(100, 4, 0.2, &mut t), UlStatus::Ok);
        assert_eq!(ul_decide(t, [25usize, 25, 25, 25].as_ptr(), 4, &mut d), UlStatus::Ok);
        assert_eq!(d, UlDecision::Uniform);
        assert_eq!(ul_decide(t, [40usize, 40, 10, 10].as_ptr(), 4, &mut d), UlStatus::Ok);
        assert_eq!(d, UlDecision::NonUniform);
        ul_tester_free(t);
    }
}

#[test]
fn calculators() {
    let mut n = 0u64;
    let mut x = 0.0;
    unsafe {
        assert_eq!(ul_sample_size(10_000, 0.1, 0.01, 0.01, UlSampleSizeKind::Huber, &mut n), UlStatus::Ok);
        assert_eq!(n, 21_460);
        assert_eq!(ul_sample_size(10_000, 0.1, 2.0, 0.01, UlSampleSizeKind::Huber, &mut n), UlStatus::InvalidParameter);
        assert_eq!(ul_default_beta(10_000, 10_000, 0.125, 2.0, &mut x), UlStatus::Ok);
        assert!((x - 12.396).abs() < 1e-3);
        assert_eq!(ul_default_beta(10, 10, 0.1, 0.0, &mut x), UlStatus::InvalidParameter);
        assert_eq!(ul_min_nvar(2, 2, 0.1, UlTarget::Qbar, &mut x), UlStatus::Ok);
        assert!((x - 625.0).abs() < 1e-9 * 625.0);
        assert!(CStr::from_ptr(ul_version()).to_str().unwrap().starts_with("0."));
    }
}

/// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = root.join("include/uniformity_lab.h");
    assert!(header.exists());
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    let lib = lib_dir.join("libuniformity_lab_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <math.h>
#include "uniformity_lab.h"
int main(void) {
    UlTester *t = NULL;
    if (ul_tester_new(UL_KIND_HUBER, 2.0, 4, 4, 0.5, 2.0, &t) != UL_STATUS_OK) return 1;
    size_t counts[4] = {4, 0, 0, 0};
    UlDecision d;
    if (ul_decide(t, counts, 4, &d) != UL_STATUS_OK || d != UL_DECISION_NON_UNIFORM) return 2;
    ul_tester_free(t);
    uint64_t n = 0;
    if (ul_sample_size(10000, 0.1, 0.01, 0.01, UL_SAMPLE_SIZE_KIND_HUBER, &n) != UL_STATUS_OK) return 3;
    double beta;
    if (ul_default_beta(10, 10, 0.1, 0.0, &beta) != UL_STATUS_INVALID_PARAMETER) return 4;
    printf("%llu %s\n", (unsigned long long)n, ul_last_error_message()[0] ? "err" : "none");
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "21460 err");
}
