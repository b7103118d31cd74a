use std::f64::consts::{LN_2, PI};

use blowup_core::km::{explicit_z2d, fourier_series_2d, km_from_block, project_z, Z2dFrame};
use blowup_core::moments::{compute_moments, fourier_block2, FourierBlock2};
use blowup_core::quadratic::{make_p_delta, HarmonicQuadratic};

fn block(n: usize, delta: &[f64]) -> FourierBlock2 {
    fourier_block2(&compute_moments(delta, n, 64).unwrap())
}

fn max_diff(a: &HarmonicQuadratic, b: &HarmonicQuadratic) -> f64 {
    a.coeff().iter().zip(b.coeff()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn zero_block_gives_zero_q() {
    let b = FourierBlock2 {
        n: 3,
        a2sigma2: HarmonicQuadratic::zero(3),
    };
    let dec = km_from_block(&b, 3).unwrap();
    assert!(dec.q.coeff().iter().all(|c| *c == 0.0));
}

#[test]
fn q_is_block_over_n_plus_two() {
    let b = block(3, &[0.0]);
    let dec = km_from_block(&b, 3).unwrap();
    assert!(max_diff(&dec.q, &b.a2sigma2.scaled(0.2)) < 1e-15);
}

#[test]
fn projection_at_unit_scale_vanishes() {
    let dec = km_from_block(&block(4, &[0.02, -0.01]), 4).unwrap();
    let p = project_z(&dec, 1.0).unwrap();
    assert!(p.coeff().iter().all(|c| c.abs() == 0.0));
}

#[test]
fn zero_delta_half_scale_constant() {
    for n in 2..=5 {
        let dec = km_from_block(&block(n, &vec![0.0; n - 2]), n).unwrap();
        let got = project_z(&dec, 0.5).unwrap();
        let want = make_p_delta(n, &vec![0.0; n - 2]).unwrap().scaled(LN_2 / (2.0 * PI));
        assert!(max_diff(&got, &want) < 1e-10, "n={n}: {:?}", got.diag());
    }
}

#[test]
fn log_scaling() {
    let dec = km_from_block(&block(3, &[0.04]), 3).unwrap();
    let half = project_z(&dec, 0.5).unwrap();
    let quarter = project_z(&dec, 0.25).unwrap();
    assert!(max_diff(&quarter, &half.scaled(2.0)) < 1e-14);
    let (r1, r2) = (0.7, 0.3);
    let composed = project_z(&dec, r1).unwrap().add(&project_z(&dec, r2).unwrap()).unwrap();
    assert!(max_diff(&project_z(&dec, r1 * r2).unwrap(), &composed) < 1e-14);
}

#[test]
fn linear_in_the_block() {
    let b = block(4, &[0.03, 0.01]);
    let scaled = FourierBlock2 {
        n: 4,
        a2sigma2: b.a2sigma2.scaled(-2.5),
    };
    let p = project_z(&km_from_block(&b, 4).unwrap(), 0.5).unwrap();
    let ps = project_z(&km_from_block(&scaled, 4).unwrap(), 0.5).unwrap();
    assert!(max_diff(&ps, &p.scaled(-2.5)) < 1e-14);
}

#[test]
fn scale_outside_unit_interval_is_rejected() {
    let dec = km_from_block(&block(3, &[0.0]), 3).unwrap();
    for r in [0.0, -0.5, 1.5, f64::NAN] {
        assert!(project_z(&dec, r).is_err(), "r={r}");
    }
}

#[test]
fn explicit_solution_at_origin() {
    assert_eq!(explicit_z2d([0.0, 0.0], Z2dFrame::Rotated), 0.0);
    let h = 1e-6;
    for frame in [Z2dFrame::Rotated, Z2dFrame::Axis] {
        let gx = (explicit_z2d([h, 0.0], frame) - explicit_z2d([-h, 0.0], frame)) / (2.0 * h);
        let gy = (explicit_z2d([0.0, h], frame) - explicit_z2d([0.0, -h], frame)) / (2.0 * h);
        assert!(gx.abs() <= 1e-6 && gy.abs() <= 1e-6, "{frame:?}: {gx} {gy}");
    }
}

fn laplacian(x: [f64; 2], frame: Z2dFrame) -> f64 {
    let h = 1e-3;
    let z = |a: f64, b: f64| explicit_z2d([a, b], frame);
    (z(x[0] + h, x[1]) + z(x[0] - h, x[1]) + z(x[0], x[1] + h) + z(x[0], x[1] - h) - 4.0 * z(x[0], x[1])) / (h * h)
}

#[test]
fn explicit_solution_laplacian() {
    assert!((laplacian([0.3, 0.2], Z2dFrame::Rotated) + 1.0).abs() < 1e-5);
    assert!(laplacian([-0.3, 0.2], Z2dFrame::Rotated).abs() < 1e-5);
    assert!((laplacian([-0.4, -0.1], Z2dFrame::Rotated) + 1.0).abs() < 1e-5);
    assert!((laplacian([0.5, 0.1], Z2dFrame::Axis) + 1.0).abs() < 1e-5);
    assert!(laplacian([0.1, -0.5], Z2dFrame::Axis).abs() < 1e-5);
}

#[test]
fn frames_differ_by_a_quarter_turn_of_the_axes() {
    let c = std::f64::consts::FRAC_1_SQRT_2;
    for x in [[0.3, 0.2], [-0.1, 0.7], [0.5, -0.5]] {
        let rotated = explicit_z2d([c * (x[0] - x[1]), c * (x[0] + x[1])], Z2dFrame::Rotated);
        assert!((explicit_z2d(x, Z2dFrame::Axis) - rotated).abs() < 1e-15);
    }
}

#[test]
fn circle_series_of_p0() {
    let dec = fourier_series_2d(&make_p_delta(2, &[]).unwrap(), 40).unwrap();
    for t in &dec.phi_terms {
        if t.degree % 2 == 1 {
            assert!(t.cos_coef.abs() < 1e-13 && t.sin_coef.abs() < 1e-13, "degree {}", t.degree);
        }
    }
    let a0 = dec.phi_terms.iter().find(|t| t.degree == 0).unwrap();
    assert!((a0.cos_coef + 0.5).abs() < 1e-13);
    let want = make_p_delta(2, &[]).unwrap().scaled(LN_2 / (2.0 * PI));
    assert!(max_diff(&project_z(&dec, 0.5).unwrap(), &want) < 1e-6);
}

#[test]
fn circle_series_agrees_with_moment_path() {
    let from_series = fourier_series_2d(&make_p_delta(2, &[]).unwrap(), 8).unwrap();
    let from_moments = km_from_block(&block(2, &[]), 2).unwrap();
    assert!(max_diff(&from_series.q, &from_moments.q) < 1e-12);
}

#[test]
fn reconstruction_error_within_reported_tail() {
    let dec = fourier_series_2d(&make_p_delta(2, &[]).unwrap(), 40).unwrap();
    let mut worst: f64 = 0.0;
    for i in 1..=10 {
        for j in 0..10 {
            let r = i as f64 / 10.0;
            let t = 2.0 * PI * j as f64 / 10.0 + 0.1;
            let x = [r * t.cos(), r * t.sin()];
            worst = worst.max((dec.eval_2d(x).unwrap() - explicit_z2d(x, Z2dFrame::Axis)).abs());
        }
    }
    assert!(worst <= dec.tail_bound, "{worst} > {}", dec.tail_bound);
}

#[test]
fn pointwise_reconstruction_is_two_dimensional_only() {
    let dec = km_from_block(&block(3, &[0.0]), 3).unwrap();
    assert!(dec.eval_2d([0.1, 0.2]).is_err());
    assert!(fourier_series_2d(&make_p_delta(3, &[0.0]).unwrap(), 10).is_err());
    assert!(fourier_series_2d(&make_p_delta(2, &[]).unwrap(), 1).is_err());
}
