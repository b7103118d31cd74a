//! Indicator moments `B_i(delta) = -int chi_{p_delta>0} x_i^2 dA`, their
//! increments over `delta = 0`, the degree-2 harmonic block of
//! `-chi_{p_delta>0}` and the inner-slab integral.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numeric::{adaptive_gk_scalar, pairwise_sum, sphere_area, AdaptiveTol};
use crate::quadratic::{make_p_delta, HarmonicQuadratic};
use crate::sphere::{
    build_rule, integrate, integrate_indicator_many, mc_chunk_count, mc_chunk_many, mc_estimate, merge_tree, ChunkStats,
    IndicatorTol, McEstimate, SpherePolynomial, SphereRule,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub n: usize,
    pub delta: Vec<f64>,
    pub b: f64,
    pub b_i: Vec<f64>,
    pub c: f64,
    pub c_i: Vec<f64>,
    pub order: usize,
    /// Largest refinement gap among the underlying indicator integrals.
    pub refinement_gap: f64,
    pub warning: bool,
}

impl MomentSet {
    /// `n B_i - B` for every axis.
    pub fn weighted_differences(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.b_i.iter().map(|bi| n * bi - self.b).collect()
    }
}

/// `B(0) = -omega/2` and `B_i(0) = -omega/(2n)` for `i <= n-2`.
pub fn zero_delta_baseline(n: usize) -> (f64, f64) {
    let omega = sphere_area(n);
    (-omega / 2.0, -omega / (2.0 * n as f64))
}

/// Closed forms of `B_{n-1}(0)` and `B_n(0)`; the moments module computes
/// these two by quadrature and uses the closed forms only as a cross-check.
pub fn zero_delta_last_pair(n: usize) -> (f64, f64) {
    let omega = sphere_area(n);
    let nf = n as f64;
    (
        -omega * (1.0 / (2.0 * nf) + 1.0 / (nf * PI)),
        -omega * (1.0 / (2.0 * nf) - 1.0 / (nf * PI)),
    )
}

fn weights(n: usize) -> Vec<SpherePolynomial> {
    let mut gs = Vec::with_capacity(n + 1);
    gs.push(SpherePolynomial::one(n));
    for i in 0..n {
        gs.push(SpherePolynomial::square(n, i));
    }
    gs
}

/// Raw `(B, B_1..B_n, gap, warning)` on a given rule.
pub fn indicator_moments(rule: &SphereRule, delta: &[f64], tol: IndicatorTol) -> Result<(f64, Vec<f64>, f64, bool)> {
    let n = rule.dim();
    let p = make_p_delta(n, delta)?;
    let res = integrate_indicator_many(rule, &p, &weights(n), tol)?;
    let gap = res.iter().fold(0.0f64, |m, r| m.max(r.refinement_gap));
    let warning = res.iter().any(|r| r.warning);
    let b = -res[0].value;
    let b_i = res[1..].iter().map(|r| -r.value).collect();
    Ok((b, b_i, gap, warning))
}

pub fn compute_moments(delta: &[f64], n: usize, order: usize) -> Result<MomentSet> {
    compute_moments_with(delta, n, order, IndicatorTol::default())
}

pub fn compute_moments_with(delta: &[f64], n: usize, order: usize, tol: IndicatorTol) -> Result<MomentSet> {
    if n < 2 {
        return Err(Error::domain("n must be ≥ 2"));
    }
    if delta.len() != n - 2 {
        return Err(Error::DimensionMismatch {
            expected: n - 2,
            found: delta.len(),
        });
    }
    let norm = libm::sqrt(delta.iter().map(|d| d * d).sum());
    if !(norm < 0.5) {
        return Err(Error::domain("|delta| must be < 1/2"));
    }
    let rule = build_rule(n, order)?;
    let (b, b_i, gap, warning) = indicator_moments(&rule, delta, tol)?;

    let (_, lead0) = zero_delta_baseline(n);
    let (_, tail0, gap0, warn0) = indicator_moments(&rule, &vec![0.0; n - 2], tol)?;
    let c_i: Vec<f64> = (0..n)
        .map(|i| if i < n - 2 { b_i[i] - lead0 } else { b_i[i] - tail0[i] })
        .collect();
    // sum x_i^2 = 1 on the sphere, so C is the sum of the C_i
    let c = pairwise_sum(&c_i);
    Ok(MomentSet {
        n,
        delta: delta.to_vec(),
        b,
        b_i,
        c,
        c_i,
        order,
        refinement_gap: gap.max(gap0),
        warning: warning || warn0,
    })
}

/// Pointwise integrand whose sphere integrals are `(B, B_1, ..., B_n)`.
pub fn moment_integrand(n: usize, delta: &[f64]) -> Result<impl Fn(&[f64], &mut [f64])> {
    let p = make_p_delta(n, delta)?;
    Ok(move |x: &[f64], out: &mut [f64]| {
        let inside = if p.eval(x) > 0.0 { -1.0 } else { 0.0 };
        out[0] = inside;
        for (o, xi) in out[1..].iter_mut().zip(x) {
            *o = inside * xi * xi;
        }
    })
}

/// Monte Carlo estimates of `(B, B_1, ..., B_n)` from one shared sample set.
pub fn mc_moments(n: usize, delta: &[f64], samples: u64, seed: u64) -> Result<Vec<McEstimate>> {
    let mut f = moment_integrand(n, delta)?;
    let chunks = (0..mc_chunk_count(samples))
        .map(|c| mc_chunk_many(n, n + 1, &mut f, samples, seed, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(merge_moment_chunks(n, &chunks, seed))
}

/// Merges per-chunk statistics (chunk-major) into one estimate per output.
pub fn merge_moment_chunks(n: usize, chunks: &[Vec<ChunkStats>], seed: u64) -> Vec<McEstimate> {
    let outputs = chunks.first().map_or(0, |c| c.len());
    (0..outputs)
        .map(|k| {
            let col: Vec<ChunkStats> = chunks.iter().map(|c| c[k]).collect();
            mc_estimate(n, &merge_tree(&col), seed)
        })
        .collect()
}

/// Degree-2 block of the spherical-harmonic expansion of `-chi_{p_delta>0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierBlock2 {
    pub n: usize,
    pub a2sigma2: HarmonicQuadratic,
}

/// L^2(S^{n-1}) projection onto harmonic quadratics. For trace-free
/// diagonal `H, G`, `<x'Hx, x'Gx> = 2 omega tr(HG) / (n(n+2))`, which gives
/// `H_ii = (n+2)(n B_i - B) / (2 omega)`.
pub fn fourier_block2(m: &MomentSet) -> FourierBlock2 {
    let n = m.n;
    let omega = sphere_area(n);
    let scale = (n as f64 + 2.0) / (2.0 * omega);
    let diag: Vec<f64> = m.weighted_differences().iter().map(|d| scale * d).collect();
    FourierBlock2 {
        n,
        a2sigma2: HarmonicQuadratic::diagonal_trace_free(&diag),
    }
}

/// `L_ij = int_{S^{n-3}} x_i^2 x_j^2 dA`, an (n-2)x(n-2) matrix. For n = 3
/// the sphere S^0 is the pair of points `{-1, 1}`.
pub fn build_l(n: usize, order: usize) -> Result<DMatrix<f64>> {
    if n < 3 {
        return Err(Error::domain("L needs n ≥ 3"));
    }
    let d = n - 2;
    if d == 1 {
        return Ok(DMatrix::from_element(1, 1, 2.0));
    }
    let rule = build_rule(d, order)?;
    let mut l = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = integrate(&rule, |x| x[i] * x[i] * x[j] * x[j])?;
            l[(i, j)] = v;
            l[(j, i)] = v;
        }
    }
    Ok(l)
}

/// `(lambda_1, lambda_2)` with `L = lambda_1 I + lambda_2 J`.
pub fn l_lambdas(n: usize) -> (f64, f64) {
    let d = (n - 2) as f64;
    let w = sphere_area(n - 2);
    (2.0 * w / (d * n as f64), w / (d * n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabIntegral {
    pub numeric: f64,
    pub asymptotic: f64,
}

/// Inner-slab integral
/// `int_0^mu int_0^mu (chi_{kappa + s^2 - t^2 > 0} - chi_{s^2 - t^2 > 0}) dt ds`
/// against its leading term `kappa |ln|kappa|| / 4`.
pub fn inner_slab_integral(kappa: f64, mu: f64) -> Result<SlabIntegral> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::domain("mu must lie in (0, 1)"));
    }
    if !(kappa.abs() < mu * mu) {
        return Err(Error::domain("|kappa| must be smaller than mu^2"));
    }
    if kappa == 0.0 {
        return Ok(SlabIntegral {
            numeric: 0.0,
            asymptotic: 0.0,
        });
    }
    let tol = AdaptiveTol {
        abs: 1e-12,
        ..AdaptiveTol::default()
    };
    let inner_tol = AdaptiveTol {
        abs: 1e-15,
        ..AdaptiveTol::default()
    };
    let mut outer_breaks = vec![0.0];
    if kappa < 0.0 {
        outer_breaks.push(libm::sqrt(-kappa));
    } else {
        outer_breaks.push(libm::sqrt(mu * mu - kappa));
    }
    outer_breaks.push(mu);
    let (numeric, _) = adaptive_gk_scalar(
        |s| {
            let curve = libm::sqrt((kappa + s * s).max(0.0)).min(mu);
            let mut br = vec![0.0, curve, s.min(mu), mu];
            br.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
            br.dedup();
            adaptive_gk_scalar(
                |t| {
                    let a = if kappa + s * s - t * t > 0.0 { 1.0 } else { 0.0 };
                    let b = if s * s - t * t > 0.0 { 1.0 } else { 0.0 };
                    a - b
                },
                &br,
                inner_tol,
            )
            .0
        },
        &outer_breaks,
        tol,
    );
    Ok(SlabIntegral {
        numeric,
        asymptotic: 0.25 * kappa * libm::log(kappa.abs()).abs(),
    })
}

/// Closed form of the inner-slab integral for `0 < kappa < mu^2`.
pub fn inner_slab_closed_form(kappa: f64, mu: f64) -> f64 {
    // int_0^m sqrt(kappa + s^2) ds with m = sqrt(mu^2 - kappa), the rest capped at mu
    let m = libm::sqrt(mu * mu - kappa);
    let root = libm::sqrt(kappa + m * m);
    let curved = 0.5 * m * root + 0.5 * kappa * libm::log((m + root) / libm::sqrt(kappa));
    curved + mu * (mu - m) - 0.5 * mu * mu
}
