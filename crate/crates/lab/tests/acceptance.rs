//! One test per acceptance criterion; each prints its PASS/FAIL line.

use blowup_lab::acceptance::{criterion, Ctx, VerifyConfig};
use blowup_lab::parallel::{pool, worker_count};

fn check(id: &str) {
    let cfg = VerifyConfig::default();
    let pool = pool(worker_count(None).unwrap()).unwrap();
    let ctx = Ctx { cfg: &cfg, pool: &pool };
    let outcome = criterion(id).unwrap().run(&ctx);
    println!("{}", outcome.line());
    assert!(outcome.passed, "{}", outcome.line());
}

#[test]
fn a1_surface_measure() {
    check("A1");
}

#[test]
fn a2_zero_delta_moments() {
    check("A2");
}

#[test]
fn a3_two_dimensional_oracle() {
    check("A3");
}

#[test]
fn a4_increment_scaling_and_ordering() {
    check("A4");
}

#[test]
fn a5_l_spectrum() {
    check("A5");
}

#[test]
fn a6_inner_slab_asymptotic() {
    check("A6");
}

#[test]
fn a7_fixed_point_and_tau_increment() {
    check("A7");
}

#[test]
fn a8_convergence_escape_dichotomy() {
    check("A8");
}

#[test]
fn a9_grid_projection() {
    check("A9");
}

#[test]
fn a10_monte_carlo_oracle() {
    check("A10");
}
