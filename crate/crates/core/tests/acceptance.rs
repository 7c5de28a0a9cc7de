//! One test per acceptance criterion. Each prints a single PASS/FAIL line
//! with the measured values and the pinned tolerance, then asserts.
//!
//! Run with `--nocapture` to see the lines of passing criteria too.

use std::time::Instant;

use curlgff::harness::verify::run_criterion;
use curlgff::harness::VerifyConfig;

fn check(id: u32) {
    let start = Instant::now();
    let r = run_criterion(id, &VerifyConfig::default()).expect("criterion ran");
    println!("{} ({:.1} s)", r.line(), start.elapsed().as_secs_f64());
    assert!(r.pass, "criterion {id} failed: {}\nmeasured: {}", r.detail, r.measured);
}

#[test]
fn criterion_01_analytic_identities() {
    check(1);
}

#[test]
fn criterion_02_g_recursion() {
    check(2);
}

#[test]
fn criterion_03_base_diffusivity_limit() {
    check(3);
}

#[test]
fn criterion_04_truncated_diffusivity_n2() {
    check(4);
}

#[test]
fn criterion_05_field_covariance() {
    check(5);
}

#[test]
fn criterion_06_pure_diffusion() {
    check(6);
}

#[test]
fn criterion_07_weak_coupling_trend() {
    check(7);
}

#[test]
fn criterion_08_superdiffusivity() {
    check(8);
}

#[test]
fn criterion_09_replacement_residual() {
    check(9);
}

#[test]
fn criterion_10_determinism() {
    check(10);
}
