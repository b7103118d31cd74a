use std::f64::consts::{LN_2, PI};

use blowup_core::quadratic::DeltaState;
use blowup_core::renorm::{
    calibrate_c_gamma, check_monotonicity, half_step, iterate, sweep, Classification, MapConfig, NoiseMode,
};

fn cfg(n: usize) -> MapConfig {
    let mut c = MapConfig::new(n);
    c.order = 48;
    c
}

#[test]
fn zero_delta_step() {
    let s = DeltaState::new(3, 10.0, vec![0.0]).unwrap();
    let r = half_step(&s, &cfg(3)).unwrap();
    assert!(r.state.delta[0].abs() < 1e-12);
    assert!((r.state.tau - (10.0 + LN_2 / (2.0 * PI))).abs() < 1e-10, "{}", r.state.tau);
    assert!((r.state.tau - 10.110318).abs() < 1e-6);
}

#[test]
fn equal_entries_stay_equal() {
    let s = DeltaState::new(5, 10.0, vec![0.01; 3]).unwrap();
    let r = half_step(&s, &cfg(5)).unwrap();
    let d = &r.state.delta;
    assert!(d.iter().all(|x| (x - d[0]).abs() < 1e-12), "{d:?}");
}

#[test]
fn permuted_input_gives_the_same_state() {
    let c = cfg(4);
    let a = half_step(&DeltaState::new(4, 10.0, vec![0.02, -0.01]).unwrap(), &c).unwrap();
    let b = half_step(&DeltaState::new(4, 10.0, vec![-0.01, 0.02]).unwrap(), &c).unwrap();
    assert!((a.state.tau - b.state.tau).abs() < 1e-12);
    for (x, y) in a.state.delta.iter().zip(&b.state.delta) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn steps_are_deterministic() {
    let mut c = cfg(4);
    c.noise = NoiseMode::Random { seed: 9 };
    c.c_noise = 0.05;
    let s = DeltaState::new(4, 12.0, vec![0.01, 0.03]).unwrap();
    assert_eq!(half_step(&s, &c).unwrap(), half_step(&s, &c).unwrap());
}

#[test]
fn noise_is_bounded_and_trace_free() {
    let mut c = cfg(3);
    c.noise = NoiseMode::Random { seed: 1 };
    c.c_noise = 0.5;
    let tau = 20.0;
    let r = half_step(&DeltaState::new(3, tau, vec![0.0]).unwrap(), &c).unwrap();
    let bound = c.c_noise * f64::powf(tau, -c.alpha);
    assert!(r.noise.iter().all(|x| x.abs() <= bound + 1e-15));
    assert!(r.noise.iter().sum::<f64>().abs() < 1e-14);
    assert!(r.noise.iter().any(|x| *x != 0.0));
}

#[test]
fn zero_delta_predicates_are_vacuous() {
    let c = cfg(3);
    let s = DeltaState::new(3, 10.0, vec![0.0]).unwrap();
    let next = half_step(&s, &c).unwrap().state;
    let m = check_monotonicity(&s, &next, &c).unwrap();
    assert!(!m.exceeds && m.holds());
}

#[test]
fn ratio_claim_above_threshold() {
    let mut c = cfg(3);
    c.c_gamma = 0.01;
    let s = DeltaState::new(3, 10.0, vec![0.05]).unwrap();
    let next = half_step(&s, &c).unwrap().state;
    let m = check_monotonicity(&s, &next, &c).unwrap();
    assert!(m.exceeds);
    assert_eq!(m.ratio_claim, Some(true));
}

#[test]
fn zero_delta_converges_with_linear_tau_growth() {
    let rec = iterate(&DeltaState::new(3, 10.0, vec![0.0]).unwrap(), &cfg(3), 100);
    match &rec.classification {
        Classification::Converged { delta_inf } => assert!(delta_inf[0].abs() < 1e-12),
        other => panic!("{other:?}"),
    }
    let inc = LN_2 / (2.0 * PI);
    for s in &rec.steps {
        let want = s.k as f64 * inc;
        assert!(((s.tau - 10.0) - want).abs() <= 0.01 * want.max(inc), "step {}", s.k);
    }
    assert!(rec.tau_increasing());
}

#[test]
fn positive_entry_grows_away_from_zero() {
    let rec = iterate(&DeltaState::new(3, 10.0, vec![0.05]).unwrap(), &cfg(3), 200);
    assert!(matches!(rec.classification, Classification::Escaped { .. }), "{:?}", rec.classification);
    assert!(rec.ratio_strictly_increasing());
    assert!(rec.tau_increasing());
}

#[test]
fn one_cell_sweep_at_zero() {
    let rows = sweep(&[(10.0, vec![0.0])], &cfg(3), 50).unwrap();
    assert_eq!(rows[0].classification.label(), "converged");
}

#[test]
fn n2_cells_converge() {
    // n = 2 carries no delta; every cell converges and only tau matters
    let rows = sweep(&[(5.0, vec![]), (50.0, vec![])], &cfg(2), 20).unwrap();
    for r in &rows {
        assert_eq!(r.classification.label(), "converged");
    }
}

#[test]
fn calibration_finds_no_positive_constant() {
    let mut c = cfg(3);
    c.gamma = 0.1;
    assert_eq!(calibrate_c_gamma(&c).unwrap(), 0.0);
}

#[test]
fn invalid_configurations_are_rejected() {
    let mut c = cfg(3);
    c.gamma = 0.2;
    assert!(c.validate().is_err());
    let mut c = cfg(3);
    c.kappa0 = 0.6;
    assert!(c.validate().is_err());
    let rec = iterate(&DeltaState::new(3, 10.0, vec![0.0]).unwrap(), &MapConfig { alpha: 0.3, ..cfg(3) }, 5);
    assert_eq!(rec.classification.label(), "failed");
}
