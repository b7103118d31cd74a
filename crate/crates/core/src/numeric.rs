//! Small numerical kernels shared by the integration modules: fixed-order
//! pairwise summation, Gauss-Legendre rules and an adaptive Gauss-Kronrod
//! integrator for vector-valued integrands.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// Sums `xs` by recursive halving. The reduction tree depends only on the
/// slice length, so results do not depend on how the terms were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if xs.len() <= LEAF {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Surface measure of the unit sphere S^{n-1} in R^n, 2 pi^{n/2} / Gamma(n/2).
///
/// Uses the recurrence |S^{n+1}| = 2 pi |S^{n-1}| / n, which is exact up to
/// rounding for every integer n.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI * sphere_area(n - 2) / (n - 2) as f64,
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let half = m.div_ceil(2);
    for i in 0..half {
        let mut x = libm::cos(PI * (i as f64 + 0.75) / (m as f64 + 0.5));
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                let (_, d) = legendre_with_derivative(m, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule mapped to [a, b].
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1D {
    pub fn gauss_legendre(m: usize, a: f64, b: f64) -> Self {
        let (x, w) = gauss_legendre(m);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Rule1D {
            nodes: x.iter().map(|t| mid + half * t).collect(),
            weights: w.iter().map(|w| w * half).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        pairwise_sum(&self.weights)
    }
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances for [`adaptive_gk`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveTol {
    pub abs: f64,
    pub rel: f64,
    /// Upper bound on the number of panels.
    pub max_panels: usize,
}

impl Default for AdaptiveTol {
    fn default() -> Self {
        AdaptiveTol {
            abs: 1e-14,
            rel: 1e-14,
            max_panels: 4000,
        }
    }
}

/// Result of an adaptive integration: per-component values and the summed
/// Kronrod-minus-Gauss error estimate (max over components).
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveResult {
    pub value: Vec<f64>,
    pub error: f64,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    err: f64,
    floor: f64,
}

impl Panel {
    // Error still open to refinement; estimates below the rounding floor
    // count as converged.
    fn open_err(&self) -> f64 {
        if self.err > self.floor {
            self.err
        } else {
            0.0
        }
    }

    fn priority(&self) -> f64 {
        if self.err > self.floor && self.a < 0.5 * (self.a + self.b) && 0.5 * (self.a + self.b) < self.b {
            self.err
        } else {
            0.0
        }
    }
}

/// Globally adaptive G7-K15 quadrature of a vector-valued integrand over the
/// consecutive panels `[breaks[i], breaks[i + 1]]`.
///
/// The integrand writes `dim` components into its output slice. The panel
/// with the largest error estimate is bisected until the summed estimate
/// meets `max(abs, rel * |value|)`, every panel is at its rounding floor, or
/// the panel budget is spent. Panels are summed in left-to-right order, so
/// results are bitwise reproducible.
pub fn adaptive_gk<F>(mut f: F, breaks: &[f64], dim: usize, tol: AdaptiveTol) -> AdaptiveResult
where
    F: FnMut(f64, &mut [f64]),
{
    let mut scratch = Scratch::new(dim);
    let mut evaluations = 0;
    let mut panels: Vec<Panel> = Vec::new();
    let mut eval = |a: f64, b: f64, scratch: &mut Scratch, evaluations: &mut usize| {
        let (err, floor) = gk15(&mut f, a, b, scratch);
        *evaluations += 15;
        Panel {
            a,
            b,
            value: scratch.kron.clone(),
            err,
            floor,
        }
    };
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            panels.push(eval(w[0], w[1], &mut scratch, &mut evaluations));
        }
    }
    let mut running = vec![0.0; dim];
    let mut total_err = 0.0;
    for p in &panels {
        total_err += p.open_err();
        for (r, v) in running.iter_mut().zip(&p.value) {
            *r += v;
        }
    }
    while panels.len() < tol.max_panels {
        let magnitude = running.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if total_err <= tol.abs.max(tol.rel * magnitude) {
            break;
        }
        let mut worst = None;
        let mut worst_p = 0.0;
        for (i, p) in panels.iter().enumerate() {
            let pr = p.priority();
            if pr > worst_p {
                worst_p = pr;
                worst = Some(i);
            }
        }
        let Some(i) = worst else { break };
        let p = panels.swap_remove(i);
        let mid = 0.5 * (p.a + p.b);
        let left = eval(p.a, mid, &mut scratch, &mut evaluations);
        let right = eval(mid, p.b, &mut scratch, &mut evaluations);
        total_err += left.open_err() + right.open_err() - p.open_err();
        for c in 0..dim {
            running[c] += left.value[c] + right.value[c] - p.value[c];
        }
        panels.push(left);
        panels.push(right);
    }
    panels.sort_by(|x, y| x.a.partial_cmp(&y.a).unwrap_or(core::cmp::Ordering::Equal));
    let mut value = vec![0.0; dim];
    let mut col = vec![0.0; panels.len()];
    for (c, v) in value.iter_mut().enumerate() {
        for (dst, p) in col.iter_mut().zip(&panels) {
            *dst = p.value[c];
        }
        *v = pairwise_sum(&col);
    }
    AdaptiveResult {
        value,
        error: panels.iter().map(|p| p.err).sum(),
        evaluations,
    }
}

/// Scalar convenience wrapper around [`adaptive_gk`].
pub fn adaptive_gk_scalar<F>(mut f: F, breaks: &[f64], tol: AdaptiveTol) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let r = adaptive_gk(|x, out| out[0] = f(x), breaks, 1, tol);
    (r.value[0], r.error)
}

struct Scratch {
    fx: Vec<f64>,
    kron: Vec<f64>,
    gauss: Vec<f64>,
    abs: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Scratch {
            fx: vec![0.0; dim],
            kron: vec![0.0; dim],
            gauss: vec![0.0; dim],
            abs: vec![0.0; dim],
        }
    }
}

// Returns the error estimate and the rounding floor below which the
// estimate carries no information.
fn gk15<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, s: &mut Scratch) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    s.kron.iter_mut().for_each(|v| *v = 0.0);
    s.gauss.iter_mut().for_each(|v| *v = 0.0);
    s.abs.iter_mut().for_each(|v| *v = 0.0);
    f(mid, &mut s.fx);
    for (i, fx) in s.fx.iter().enumerate() {
        s.kron[i] += WGK[7] * fx;
        s.gauss[i] += WG[3] * fx;
        s.abs[i] += WGK[7] * fx.abs();
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        for &x in &[mid - dx, mid + dx] {
            f(x, &mut s.fx);
            for (i, fx) in s.fx.iter().enumerate() {
                s.kron[i] += WGK[j] * fx;
                s.abs[i] += WGK[j] * fx.abs();
                if j % 2 == 1 {
                    s.gauss[i] += WG[j / 2] * fx;
                }
            }
        }
    }
    let mut err: f64 = 0.0;
    let mut floor: f64 = 0.0;
    for i in 0..s.kron.len() {
        s.kron[i] *= half;
        s.gauss[i] *= half;
        err = err.max((s.kron[i] - s.gauss[i]).abs());
        floor = floor.max(50.0 * f64::EPSILON * half.abs() * s.abs[i]);
    }
    (err, floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(7);
        // degree 12 is within 2m - 1 = 13
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert_relative_eq!(s, 2.0 / 13.0, max_relative = 1e-14);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn gauss_legendre_large_order_is_stable() {
        let r = Rule1D::gauss_legendre(200, 0.0, PI);
        let s: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * libm::sin(*x)).sum();
        assert_relative_eq!(s, 2.0, max_relative = 1e-14);
        assert!(r.nodes.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn sphere_area_matches_gamma_formula() {
        for n in 1..10 {
            let g = 2.0 * libm::pow(PI, n as f64 / 2.0) / libm::tgamma(n as f64 / 2.0);
            assert_relative_eq!(sphere_area(n), g, max_relative = 1e-14);
        }
    }

    #[test]
    fn adaptive_handles_sqrt_endpoint() {
        let (v, _) = adaptive_gk_scalar(|x: f64| x.sqrt(), &[0.0, 1.0], AdaptiveTol::default());
        assert_relative_eq!(v, 2.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn adaptive_respects_breakpoints_for_step() {
        let (v, _) = adaptive_gk_scalar(
            |x: f64| if x < 0.3 { 1.0 } else { 0.0 },
            &[0.0, 0.3, 1.0],
            AdaptiveTol::default(),
        );
        assert_relative_eq!(v, 0.3, max_relative = 1e-15);
    }

    #[test]
    fn pairwise_sum_is_order_fixed() {
        let xs: Vec<f64> = (0..1000).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        assert_eq!(pairwise_sum(&xs).to_bits(), pairwise_sum(&xs.clone()).to_bits());
        assert_relative_eq!(pairwise_sum(&xs), xs.iter().sum::<f64>(), max_relative = 1e-14);
    }
}
