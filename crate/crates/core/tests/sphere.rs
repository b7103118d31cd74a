use std::f64::consts::PI;

use blowup_core::numeric::sphere_area;
use blowup_core::quadratic::make_p_delta;
use blowup_core::sphere::{
    build_rule, integrate, integrate_indicator_quadratic, mc_integrate, IndicatorTol, SpherePolynomial,
};

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1.0)
}

#[test]
fn weights_sum_to_sphere_area() {
    for (n, area) in [(2, 2.0 * PI), (3, 4.0 * PI), (4, 2.0 * PI * PI)] {
        let rule = build_rule(n, 64).unwrap();
        assert!(close(rule.weight_sum(), area, 1e-13), "n={n}: {}", rule.weight_sum());
    }
}

#[test]
fn polynomial_moments_n3() {
    let rule = build_rule(3, 64).unwrap();
    assert!(close(integrate(&rule, |_| 1.0).unwrap(), 4.0 * PI, 1e-13));
    for i in 0..3 {
        let m2 = integrate(&rule, |x| x[i] * x[i]).unwrap();
        let m4 = integrate(&rule, |x| x[i].powi(4)).unwrap();
        assert!(close(m2, 4.0 * PI / 3.0, 1e-13), "x_{i}^2: {m2}");
        assert!(close(m4, 12.0 * PI / 15.0, 1e-13), "x_{i}^4: {m4}");
    }
}

#[test]
fn moments_are_permutation_symmetric() {
    for n in 2..=5 {
        let rule = build_rule(n, 32).unwrap();
        let want = sphere_area(n) / n as f64;
        for i in 0..n {
            let v = integrate(&rule, |x| x[i] * x[i]).unwrap();
            assert!(close(v, want, 1e-12), "n={n} i={i}: {v} vs {want}");
        }
    }
}

#[test]
fn indicator_of_p0_is_half_the_sphere() {
    for n in 2..=5 {
        let rule = build_rule(n, 64).unwrap();
        let p0 = make_p_delta(n, &vec![0.0; n - 2]).unwrap();
        let r = integrate_indicator_quadratic(&rule, &p0, &SpherePolynomial::one(n), IndicatorTol::default()).unwrap();
        assert!(close(r.value, sphere_area(n) / 2.0, 1e-10), "n={n}: {}", r.value);
        assert!(!r.warning);
    }
}

#[test]
fn indicator_of_p0_against_x1_squared_n4() {
    let rule = build_rule(4, 64).unwrap();
    let p0 = make_p_delta(4, &[0.0, 0.0]).unwrap();
    let r = integrate_indicator_quadratic(&rule, &p0, &SpherePolynomial::square(4, 0), IndicatorTol::default()).unwrap();
    assert!(close(r.value, PI * PI / 4.0, 1e-10), "{}", r.value);
}

#[test]
fn indicator_of_p_delta_matches_monte_carlo() {
    let delta = [1e-3, 0.0];
    let p = make_p_delta(4, &delta).unwrap();
    let rule = build_rule(4, 64).unwrap();
    let quad = integrate_indicator_quadratic(&rule, &p, &SpherePolynomial::one(4), IndicatorTol::default()).unwrap();
    let mc = mc_integrate(4, |x| if p.eval(x) > 0.0 { 1.0 } else { 0.0 }, 10_000_000, 11).unwrap();
    let z = (quad.value - mc.value).abs() / mc.std_error;
    assert!(z < 3.0, "quadrature {} vs MC {} ± {} ({z:.2} sigma)", quad.value, mc.value, mc.std_error);
}

#[test]
fn monte_carlo_of_constant_is_exact() {
    for seed in [0, 1, 99] {
        let mc = mc_integrate(3, |_| 1.0, 10_000, seed).unwrap();
        assert!(close(mc.value, 4.0 * PI, 1e-14));
        assert!(mc.std_error.abs() < 1e-12);
    }
}

#[test]
fn monte_carlo_half_measure_n3() {
    let p0 = make_p_delta(3, &[0.0]).unwrap();
    let mc = mc_integrate(3, |x| if p0.eval(x) > 0.0 { 1.0 } else { 0.0 }, 1_000_000, 5).unwrap();
    assert!((mc.value - 2.0 * PI).abs() < 3.0 * mc.std_error, "{mc:?}");
}

#[test]
fn monte_carlo_weighted_half_measure_n5() {
    let p0 = make_p_delta(5, &[0.0; 3]).unwrap();
    let mc = mc_integrate(5, |x| if p0.eval(x) > 0.0 { x[0] * x[0] } else { 0.0 }, 1_000_000, 5).unwrap();
    let want = sphere_area(5) / 10.0;
    assert!((mc.value - want).abs() < 3.0 * mc.std_error, "{mc:?} vs {want}");
}

#[test]
fn monte_carlo_is_reproducible() {
    let f = |x: &[f64]| x[0] * x[1] + x[2].powi(2);
    let a = mc_integrate(3, f, 50_000, 42).unwrap();
    let b = mc_integrate(3, f, 50_000, 42).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(build_rule(1, 64).is_err());
    let rule = build_rule(3, 16).unwrap();
    let p = make_p_delta(4, &[0.0, 0.0]).unwrap();
    assert!(integrate_indicator_quadratic(&rule, &p, &SpherePolynomial::one(4), IndicatorTol::default()).is_err());
}
