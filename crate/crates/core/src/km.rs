//! Karp-Margulis decomposition `Z = q ln|x| + |x|^2 phi(x) - q/(n+2)` of the
//! solution of `ΔZ = σ` for a zero-homogeneous `σ`, normalized so that the
//! harmonic-quadratic projection of `Z` at scale 1 vanishes.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::moments::FourierBlock2;
use crate::numeric::{adaptive_gk, AdaptiveTol};
use crate::quadratic::HarmonicQuadratic;

/// One non-quadratic term of `phi` in two dimensions:
/// `factor * (cos_coef cos(kθ) + sin_coef sin(kθ))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiTerm {
    pub degree: u32,
    pub cos_coef: f64,
    pub sin_coef: f64,
    /// `-1 / ((n + k)(k - 2))`, the inverse of `Δ` on `|x|^2 σ_k`.
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMDecomposition {
    pub n: usize,
    pub q: HarmonicQuadratic,
    pub phi_terms: Vec<PhiTerm>,
    /// Bound on the sup over the unit ball of the discarded part of `phi`.
    pub tail_bound: f64,
}

pub fn km_from_block(block: &FourierBlock2, n: usize) -> Result<KMDecomposition> {
    if block.n != n || block.a2sigma2.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: block.a2sigma2.dim(),
        });
    }
    Ok(KMDecomposition {
        n,
        q: block.a2sigma2.scaled(1.0 / (n as f64 + 2.0)),
        phi_terms: Vec::new(),
        tail_bound: 0.0,
    })
}

/// Harmonic-quadratic projection of `Z` at scale `r`: `q ln r`.
pub fn project_z(dec: &KMDecomposition, r: f64) -> Result<HarmonicQuadratic> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::domain("r must lie in (0, 1]"));
    }
    Ok(dec.q.scaled(libm::log(r)))
}

impl KMDecomposition {
    /// Evaluates the reconstructed `Z` at `x`; two-dimensional only.
    pub fn eval_2d(&self, x: [f64; 2]) -> Result<f64> {
        if self.n != 2 {
            return Err(Error::domain("pointwise reconstruction is available for n = 2 only"));
        }
        let r2 = x[0] * x[0] + x[1] * x[1];
        if r2 == 0.0 {
            return Ok(0.0);
        }
        let theta = libm::atan2(x[1], x[0]);
        let q = self.q.eval(&x);
        let phi: f64 = self
            .phi_terms
            .iter()
            .map(|t| {
                let k = t.degree as f64;
                t.factor * (t.cos_coef * libm::cos(k * theta) + t.sin_coef * libm::sin(k * theta))
            })
            .sum();
        Ok(0.5 * q * libm::log(r2) + r2 * phi - q / (self.n as f64 + 2.0))
    }
}

/// Which frame [`explicit_z2d`] is evaluated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Z2dFrame {
    /// Solution of `ΔZ = -χ_{x1 x2 > 0}`.
    Rotated,
    /// Solution of `ΔZ = -χ_{x1^2 > x2^2}`, the rotated one turned by 45°.
    Axis,
}

fn v_first_quadrant(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    -4.0 * x * y * libm::log(r2) + 2.0 * (x * x - y * y) * (PI / 2.0 - 2.0 * libm::atan(y / x)) - PI * r2
}

fn w_piecewise(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        // v vanishes on both axes
        return 0.0;
    }
    if x * y >= 0.0 {
        v_first_quadrant(x, y)
    } else if x < 0.0 {
        -v_first_quadrant(-x, y)
    } else {
        -v_first_quadrant(x, -y)
    }
}

/// The closed-form two-dimensional correction
/// `(w - π|x|^2 + 8 x1 x2) / (8π)` with the quadrant-wise `w`.
pub fn explicit_z2d(x: [f64; 2], frame: Z2dFrame) -> f64 {
    let (a, b) = match frame {
        Z2dFrame::Rotated => (x[0], x[1]),
        Z2dFrame::Axis => (FRAC_1_SQRT_2 * (x[0] - x[1]), FRAC_1_SQRT_2 * (x[0] + x[1])),
    };
    if a == 0.0 && b == 0.0 {
        return 0.0;
    }
    (w_piecewise(a, b) - PI * (a * a + b * b) + 8.0 * a * b) / (8.0 * PI)
}

/// Fourier expansion of `-χ_{p>0}` on the unit circle, turned into the
/// decomposition of the corresponding `Z`.
pub fn fourier_series_2d(p: &HarmonicQuadratic, max_degree: u32) -> Result<KMDecomposition> {
    if p.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: p.dim(),
        });
    }
    if max_degree < 2 {
        return Err(Error::domain("max_degree must be ≥ 2"));
    }
    // p(cos θ, sin θ) = R cos(2θ - θ0) vanishes at θ0/2 ± π/4 + kπ/2
    let (a11, a12) = (p.entry(0, 0), p.entry(0, 1));
    let theta0 = libm::atan2(a12, a11);
    let mut breaks: Vec<f64> = (0..4)
        .map(|k| {
            let t = 0.5 * theta0 + PI / 4.0 + k as f64 * PI / 2.0;
            t.rem_euclid(2.0 * PI)
        })
        .collect();
    breaks.push(0.0);
    breaks.push(2.0 * PI);
    breaks.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
    breaks.dedup();

    let kmax = max_degree as usize;
    let dim = 2 * (kmax + 1);
    let res = adaptive_gk(
        |theta, out| {
            let (c, s) = (libm::cos(theta), libm::sin(theta));
            let sigma = if p.eval(&[c, s]) > 0.0 { -1.0 } else { 0.0 };
            for k in 0..=kmax {
                let kt = k as f64 * theta;
                out[2 * k] = sigma * libm::cos(kt);
                out[2 * k + 1] = sigma * libm::sin(kt);
            }
        },
        &breaks,
        dim,
        AdaptiveTol {
            abs: 1e-15,
            rel: 1e-15,
            ..AdaptiveTol::default()
        },
    );
    let coef = |k: usize| -> (f64, f64) {
        let norm = if k == 0 { 2.0 * PI } else { PI };
        (res.value[2 * k] / norm, res.value[2 * k + 1] / norm)
    };

    let (a2, b2) = coef(2);
    // a2 cos 2θ + b2 sin 2θ = (a2 (x1^2 - x2^2) + 2 b2 x1 x2) / |x|^2
    let q = HarmonicQuadratic::from_row_major(2, vec![a2, b2, b2, -a2])?.scaled(0.25);

    let mut phi_terms = Vec::new();
    let mut decay: f64 = 0.0;
    for k in (0..=kmax).filter(|k| *k != 2) {
        let (a, b) = coef(k);
        let kf = k as f64;
        phi_terms.push(PhiTerm {
            degree: k as u32,
            cos_coef: a,
            sin_coef: b,
            factor: -1.0 / ((2.0 + kf) * (kf - 2.0)),
        });
        if k >= kmax / 2 && k > 2 {
            decay = decay.max(kf * libm::sqrt(a * a + b * b));
        }
    }
    // |c_k| <= decay / k and sum_{k>M} 1/(k (k+2)(k-2)) <= 1/(2 (M-2)^2)
    let m = kmax as f64;
    let tail_bound = decay / (2.0 * (m - 1.0).powi(2).max(1.0));
    Ok(KMDecomposition {
        n: 2,
        q,
        phi_terms,
        tail_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{compute_moments, fourier_block2};
    use crate::quadratic::make_p_delta;
    use approx::assert_relative_eq;

    fn laplacian(f: impl Fn([f64; 2]) -> f64, x: [f64; 2], h: f64) -> f64 {
        (f([x[0] + h, x[1]]) + f([x[0] - h, x[1]]) + f([x[0], x[1] + h]) + f([x[0], x[1] - h]) - 4.0 * f(x)) / (h * h)
    }

    #[test]
    fn explicit_solution_has_the_right_laplacian() {
        let z = |x| explicit_z2d(x, Z2dFrame::Rotated);
        assert!((laplacian(z, [0.3, 0.2], 1e-3) + 1.0).abs() < 1e-5);
        assert!(laplacian(z, [-0.3, 0.2], 1e-3).abs() < 1e-5);
        assert!((laplacian(z, [-0.3, -0.25], 1e-3) + 1.0).abs() < 1e-5);
        assert!(laplacian(z, [0.4, -0.1], 1e-3).abs() < 1e-5);
        let za = |x| explicit_z2d(x, Z2dFrame::Axis);
        assert!((laplacian(za, [0.5, 0.1], 1e-3) + 1.0).abs() < 1e-5);
        assert!(laplacian(za, [0.1, 0.5], 1e-3).abs() < 1e-5);
    }

    #[test]
    fn explicit_solution_vanishes_to_first_order() {
        let z = |x| explicit_z2d(x, Z2dFrame::Rotated);
        assert_eq!(z([0.0, 0.0]), 0.0);
        let h = 1e-7;
        assert!(((z([h, 0.0]) - z([-h, 0.0])) / (2.0 * h)).abs() < 1e-6);
        assert!(((z([0.0, h]) - z([0.0, -h])) / (2.0 * h)).abs() < 1e-6);
    }

    #[test]
    fn explicit_solution_is_c1_across_axes() {
        let z = |x| explicit_z2d(x, Z2dFrame::Rotated);
        let e = 1e-9;
        for &(x, y) in &[(0.0, 0.4), (0.0, -0.4), (0.4, 0.0), (-0.4, 0.0)] {
            let (dx, dy) = if x == 0.0 { (e, 0.0) } else { (0.0, e) };
            let a = z([x + dx, y + dy]);
            let b = z([x - dx, y - dy]);
            assert!((a - b).abs() < 1e-8, "jump at ({x}, {y})");
        }
    }

    #[test]
    fn block_and_series_agree_in_2d() {
        let p0 = make_p_delta(2, &[]).unwrap();
        let dec = fourier_series_2d(&p0, 40).unwrap();
        let m = compute_moments(&[], 2, 32).unwrap();
        let dec2 = km_from_block(&fourier_block2(&m), 2).unwrap();
        for (a, b) in dec.q.coeff().iter().zip(dec2.q.coeff()) {
            assert!((a - b).abs() < 1e-12);
        }
        let half = project_z(&dec, 0.5).unwrap();
        assert_relative_eq!(half.entry(0, 0), libm::log(2.0) / (2.0 * PI), max_relative = 1e-10);
    }

    #[test]
    fn odd_coefficients_vanish() {
        let dec = fourier_series_2d(&make_p_delta(2, &[]).unwrap(), 12).unwrap();
        for t in &dec.phi_terms {
            if t.degree % 2 == 1 {
                assert!(t.cos_coef.abs() < 1e-14 && t.sin_coef.abs() < 1e-14);
            }
        }
        assert_relative_eq!(dec.phi_terms[0].cos_coef, -0.5, max_relative = 1e-13);
    }

    #[test]
    fn project_z_scaling() {
        let dec = KMDecomposition {
            n: 3,
            q: HarmonicQuadratic::diagonal(&[0.0, 1.0, -1.0]).unwrap(),
            phi_terms: Vec::new(),
            tail_bound: 0.0,
        };
        assert_eq!(project_z(&dec, 1.0).unwrap().coeff().iter().map(|c| c.abs()).sum::<f64>(), 0.0);
        let a = project_z(&dec, 0.5).unwrap();
        let b = project_z(&dec, 0.25).unwrap();
        assert_relative_eq!(b.entry(1, 1), 2.0 * a.entry(1, 1), max_relative = 1e-15);
        assert!(project_z(&dec, 0.0).is_err());
        assert!(project_z(&dec, 1.5).is_err());
    }

    #[test]
    fn reconstruction_converges_to_closed_form() {
        let p0 = make_p_delta(2, &[]).unwrap();
        let worst = |deg| {
            let dec = fourier_series_2d(&p0, deg).unwrap();
            let mut w: f64 = 0.0;
            for i in 0..50 {
                let r = 0.02 + 0.96 * (i as f64 / 49.0);
                let t = 0.37 + 1.3 * i as f64;
                let x = [r * libm::cos(t), r * libm::sin(t)];
                w = w.max((dec.eval_2d(x).unwrap() - explicit_z2d(x, Z2dFrame::Axis)).abs());
            }
            (w, dec.tail_bound)
        };
        let (w40, t40) = worst(40);
        let (w160, _) = worst(160);
        assert!(w40 <= t40);
        assert!(w160 < 5e-6, "{w160}");
        assert!(w160 < w40 / 8.0);
    }
}
