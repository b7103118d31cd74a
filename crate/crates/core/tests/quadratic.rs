use blowup_core::quadratic::{diagonalize, make_p_delta, sup_norm_ball, HarmonicQuadratic, DEFAULT_KAPPA0};
use proptest::prelude::*;

/// Product of Givens rotations in every coordinate plane, row-major.
fn rotation(n: usize, angles: &[f64]) -> Vec<f64> {
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }
    let mut k = 0;
    for a in 0..n {
        for b in a + 1..n {
            let t = angles[k % angles.len()];
            k += 1;
            let (c, s) = (t.cos(), t.sin());
            for row in 0..n {
                let (x, y) = (q[row * n + a], q[row * n + b]);
                q[row * n + a] = c * x - s * y;
                q[row * n + b] = s * x + c * y;
            }
        }
    }
    q
}

fn max_abs_diff(a: &HarmonicQuadratic, b: &HarmonicQuadratic) -> f64 {
    a.coeff().iter().zip(b.coeff()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn p_delta_examples() {
    assert_eq!(make_p_delta(3, &[0.0]).unwrap().diag(), vec![0.0, 1.0, -1.0]);
    let p = make_p_delta(4, &[0.01, 0.02]).unwrap();
    let d = p.diag();
    assert_eq!(&d[..2], &[0.01, 0.02]);
    assert!((d[2] - 0.97).abs() < 1e-15 && d[3] == -1.0);
    assert!(p.trace().abs() < 1e-15);
    assert_eq!(make_p_delta(2, &[]).unwrap().diag(), vec![1.0, -1.0]);
    assert!(make_p_delta(4, &[0.1]).is_err());
    assert!(make_p_delta(1, &[]).is_err());
}

#[test]
fn diagonalize_round_trip() {
    let q = make_p_delta(4, &[0.01, 0.02]).unwrap().scaled(5.0);
    let nf = diagonalize(&q, DEFAULT_KAPPA0).unwrap();
    assert!((nf.state.tau - 5.0).abs() < 1e-12);
    assert!((nf.state.delta[0] - 0.01).abs() < 1e-12 && (nf.state.delta[1] - 0.02).abs() < 1e-12);
    assert!(!nf.out_of_range && !nf.has_defect);
    let id = rotation(4, &[0.0]);
    assert!(nf.state.q.iter().zip(&id).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn diagonalize_rotated_p0() {
    let q = rotation(3, &[0.3, -1.1, 0.7]);
    let p = make_p_delta(3, &[0.0]).unwrap().scaled(3.0).rotated(&q).unwrap();
    let nf = diagonalize(&p, DEFAULT_KAPPA0).unwrap();
    assert!((nf.state.tau - 3.0).abs() < 1e-12);
    assert!(nf.state.delta[0].abs() < 1e-12);
    assert!(max_abs_diff(&nf.state.polynomial(), &p) < 1e-12);
}

#[test]
fn diagonalize_flags_out_of_range() {
    let q = HarmonicQuadratic::diagonal(&[0.3, 0.3, -0.6]).unwrap();
    let nf = diagonalize(&q, DEFAULT_KAPPA0).unwrap();
    assert!((nf.state.tau - 0.6).abs() < 1e-12);
    assert!((nf.state.delta[0] - 0.5).abs() < 1e-12);
    assert!(nf.out_of_range);
}

#[test]
fn sup_norm_examples() {
    let p0 = make_p_delta(3, &[0.0]).unwrap();
    assert_eq!(sup_norm_ball(&p0), 1.0);
    assert_eq!(sup_norm_ball(&p0.scaled(5.0)), 5.0);
    assert_eq!(sup_norm_ball(&HarmonicQuadratic::diagonal(&[0.2, 0.8, -1.0]).unwrap()), 1.0);
}

#[test]
fn non_harmonic_input_is_rejected() {
    assert!(HarmonicQuadratic::diagonal(&[1.0, 1.0]).is_err());
    assert!(HarmonicQuadratic::from_row_major(2, vec![1.0, 0.5, 0.0, -1.0]).is_err());
}

fn setup() -> impl Strategy<Value = (usize, Vec<f64>, f64, Vec<f64>)> {
    (3usize..=6).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(-0.15f64..0.15, n - 2),
            1.0f64..50.0,
            prop::collection::vec(-3.2f64..3.2, n * (n - 1) / 2),
        )
    })
}

proptest! {
    #[test]
    fn diagonalize_recovers_rotated_states((n, delta, tau, angles) in setup()) {
        let q = rotation(n, &angles);
        let p = make_p_delta(n, &delta).unwrap().scaled(tau).rotated(&q).unwrap();
        let nf = diagonalize(&p, 1.0).unwrap();
        prop_assert!((nf.state.tau - tau).abs() < 1e-10 * tau);
        let mut want = delta.clone();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in nf.state.delta.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-10, "{:?} vs {:?}", nf.state.delta, want);
        }
        prop_assert!(max_abs_diff(&nf.state.polynomial(), &p) < 1e-10 * tau);
    }

    #[test]
    fn sup_norm_is_orthogonally_invariant((n, delta, tau, angles) in setup()) {
        let p = make_p_delta(n, &delta).unwrap().scaled(tau);
        let r = p.rotated(&rotation(n, &angles)).unwrap();
        prop_assert!((sup_norm_ball(&p) - sup_norm_ball(&r)).abs() < 1e-10 * tau);
        let top = p.diag().iter().fold(0.0f64, |m, d| m.max(d.abs()));
        prop_assert!((sup_norm_ball(&p) - top).abs() < 1e-12 * tau);
    }

    #[test]
    fn diagonalize_ignores_axis_order((n, delta, tau, _a) in setup(), shift in 0usize..6) {
        let p = make_p_delta(n, &delta).unwrap().scaled(tau);
        let mut perm = vec![0.0; n * n];
        for i in 0..n {
            perm[i * n + (i + shift) % n] = 1.0;
        }
        let a = diagonalize(&p, 1.0).unwrap();
        let b = diagonalize(&p.rotated(&perm).unwrap(), 1.0).unwrap();
        prop_assert!((a.state.tau - b.state.tau).abs() < 1e-12 * tau);
        for (x, y) in a.state.delta.iter().zip(&b.state.delta) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
