//! Integration over the unit sphere S^{n-1} in polar coordinates
//! `(phi, psi_1, ..., psi_{n-2})`.
//!
//! The chart is built inductively: `xi_1 = (cos phi, sin phi)` and
//! `xi_{k+1} = (sin psi_k * xi_k, cos psi_k)`, so that `x_n = cos psi_{n-2}`
//! and the area element is `prod_j sin^j(psi_j) dpsi_j dphi`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numeric::{adaptive_gk, gauss_legendre, pairwise_sum, sphere_area, AdaptiveTol, Rule1D};
use crate::quadratic::HarmonicQuadratic;

/// Tensor-product rule on S^{n-1}: trapezoid in `phi`, Gauss-Legendre in each
/// `psi_j` with the Jacobian factor `sin^j(psi_j)` folded into the weights.
///
/// The rule is stored factored; it has `order^{n-1}` nodes in total.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereRule {
    n: usize,
    order: usize,
    phi: Rule1D,
    psi: Vec<Rule1D>,
}

pub fn build_rule(n: usize, order: usize) -> Result<SphereRule> {
    if n < 2 {
        return Err(Error::domain("n must be ≥ 2"));
    }
    if order < 2 {
        return Err(Error::domain("order must be ≥ 2"));
    }
    let h = 2.0 * PI / order as f64;
    let phi = Rule1D {
        nodes: (0..order).map(|k| h * (k as f64 + 0.5)).collect(),
        weights: vec![h; order],
    };
    let psi = (1..=n - 2)
        .map(|j| {
            let mut r = Rule1D::gauss_legendre(order, 0.0, PI);
            for (w, x) in r.weights.iter_mut().zip(&r.nodes) {
                *w *= libm::pow(libm::sin(*x), j as f64);
            }
            r
        })
        .collect();
    Ok(SphereRule { n, order, phi, psi })
}

impl SphereRule {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of nodes, `order^{n-1}`.
    pub fn len(&self) -> usize {
        self.order.pow(self.n as u32 - 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weight_sum(&self) -> f64 {
        self.psi.iter().fold(self.phi.weight_sum(), |acc, r| acc * r.weight_sum())
    }

    /// Iterates over `(angles, weight)` with angles ordered `(phi, psi_1, ...)`.
    pub fn nodes(&self) -> impl Iterator<Item = (Vec<f64>, f64)> + '_ {
        let total = self.len();
        let m = self.order;
        (0..total).map(move |mut idx| {
            let mut angles = Vec::with_capacity(self.n - 1);
            let k = idx % m;
            idx /= m;
            angles.push(self.phi.nodes[k]);
            let mut w = self.phi.weights[k];
            for r in &self.psi {
                let k = idx % m;
                idx /= m;
                angles.push(r.nodes[k]);
                w *= r.weights[k];
            }
            (angles, w)
        })
    }

    /// Number of nodes on the outermost angle, the unit of parallel work.
    pub fn outer_len(&self) -> usize {
        self.order
    }
}

/// Cartesian image of polar angles `(phi, psi_1, ..., psi_{n-2})`.
pub fn to_cartesian(angles: &[f64], out: &mut [f64]) {
    let n = angles.len() + 1;
    let mut scale = 1.0;
    for j in (1..n - 1).rev() {
        out[j + 1] = scale * libm::cos(angles[j]);
        scale *= libm::sin(angles[j]);
    }
    out[0] = scale * libm::cos(angles[0]);
    out[1] = scale * libm::sin(angles[0]);
}

/// Weighted sum of `f` over the rule, reduced pairwise level by level.
pub fn integrate<F: FnMut(&[f64]) -> f64>(rule: &SphereRule, mut f: F) -> Result<f64> {
    let parts = (0..rule.outer_len())
        .map(|k| integrate_outer_node(rule, &mut f, k))
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&parts))
}

/// Contribution of the `k`-th node of the outermost angle. Summing these with
/// [`pairwise_sum`] reproduces [`integrate`] bit for bit.
pub fn integrate_outer_node<F: FnMut(&[f64]) -> f64>(rule: &SphereRule, f: &mut F, k: usize) -> Result<f64> {
    let n = rule.n;
    let mut x = vec![0.0; n];
    let mut bufs: Vec<Vec<f64>> = vec![vec![0.0; rule.order]; n - 1];
    let top = n - 2;
    let (angle, weight) = level_node(rule, top, k);
    let v = descend(rule, f, top, angle, 1.0, &mut x, &mut bufs)?;
    Ok(weight * v)
}

fn level_node(rule: &SphereRule, level: usize, k: usize) -> (f64, f64) {
    if level == 0 {
        (rule.phi.nodes[k], rule.phi.weights[k])
    } else {
        (rule.psi[level - 1].nodes[k], rule.psi[level - 1].weights[k])
    }
}

// Level 0 is phi; level j is psi_j.
fn descend<F: FnMut(&[f64]) -> f64>(
    rule: &SphereRule,
    f: &mut F,
    level: usize,
    angle: f64,
    scale: f64,
    x: &mut [f64],
    bufs: &mut [Vec<f64>],
) -> Result<f64> {
    if level == 0 {
        x[0] = scale * libm::cos(angle);
        x[1] = scale * libm::sin(angle);
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                value: v,
                point: x.to_vec(),
            });
        }
        return Ok(v);
    }
    x[level + 1] = scale * libm::cos(angle);
    let inner = scale * libm::sin(angle);
    let mut buf = core::mem::take(&mut bufs[level - 1]);
    for k in 0..rule.order {
        let (a, w) = level_node(rule, level - 1, k);
        buf[k] = w * descend(rule, f, level - 1, a, inner, x, bufs)?;
    }
    let s = pairwise_sum(&buf);
    bufs[level - 1] = buf;
    Ok(s)
}

/// A polynomial on R^n given as a list of monomials.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePolynomial {
    n: usize,
    terms: Vec<(f64, Vec<u32>)>,
}

impl SpherePolynomial {
    pub fn one(n: usize) -> Self {
        SpherePolynomial {
            n,
            terms: vec![(1.0, vec![0; n])],
        }
    }

    pub fn monomial(coef: f64, exps: Vec<u32>) -> Self {
        SpherePolynomial {
            n: exps.len(),
            terms: vec![(coef, exps)],
        }
    }

    /// `x_i^2`, zero-based `i`.
    pub fn square(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 2;
        Self::monomial(1.0, e)
    }

    pub fn plus(mut self, other: SpherePolynomial) -> Self {
        self.terms.extend(other.terms);
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[(f64, Vec<u32>)] {
        &self.terms
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, e)| c * e.iter().zip(x).map(|(&k, &xi)| libm::pow(xi, k as f64)).product::<f64>())
            .sum()
    }
}

/// Accuracy request for [`integrate_indicator_quadratic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorTol {
    /// Relative tolerance on the refinement gap before a warning is raised.
    pub rel: f64,
    /// Absolute tolerance handed to the adaptive angular integrators.
    pub abs: f64,
}

impl Default for IndicatorTol {
    fn default() -> Self {
        IndicatorTol { rel: 1e-8, abs: 1e-14 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorIntegral {
    pub value: f64,
    /// Difference between two refinement levels of the outer quadrature, or
    /// the Kronrod error estimate where the outer integral is adaptive.
    pub refinement_gap: f64,
    /// True when the gap exceeds the requested relative tolerance.
    pub warning: bool,
}

/// `int_{S^{n-1}} chi_{p>0} g dA` for a diagonal `p`.
pub fn integrate_indicator_quadratic(
    rule: &SphereRule,
    p: &HarmonicQuadratic,
    g: &SpherePolynomial,
    tol: IndicatorTol,
) -> Result<IndicatorIntegral> {
    integrate_indicator_many(rule, p, core::slice::from_ref(g), tol).map(|mut v| v.remove(0))
}

/// Several weights against the same indicator in one pass.
///
/// Only monomials with all exponents even contribute: `{p > 0}` is symmetric
/// under every axis reflection, so the rest integrate to zero. The even part
/// is `2^n` times the positive-orthant integral, which is evaluated in the
/// coordinates `x = (rho z, v, w)` with `(rho, v, w)` on the octant of S^2
/// and `z` on the orthant of S^{n-3}. For fixed `z` and azimuth `alpha` the
/// set `{p > 0}` in the polar angle `beta` is an interval with closed-form
/// endpoints; the remaining angles are integrated adaptively with breakpoints
/// where the interval changes type.
pub fn integrate_indicator_many(
    rule: &SphereRule,
    p: &HarmonicQuadratic,
    gs: &[SpherePolynomial],
    tol: IndicatorTol,
) -> Result<Vec<IndicatorIntegral>> {
    let n = rule.n;
    if p.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: p.dim(),
        });
    }
    if !p.is_diagonal(0.0) {
        return Err(Error::domain("indicator integration needs a diagonal form"));
    }
    for g in gs {
        if g.n != n {
            return Err(Error::DimensionMismatch { expected: n, found: g.n });
        }
    }
    let a = p.diag();
    let plan = Plan::new(n, gs);
    let factor = libm::pow(2.0, n as f64);
    let (values, gaps) = match n {
        2 => circle(&a, &plan, tol),
        3 => {
            let core = core_integrals(a[0], a[1], a[2], &plan.keys, tol.abs);
            let vals = plan.combine(|_| 1.0, &core.value);
            (vals, vec![core.error; gs.len()])
        }
        4 => outer_circle(&a, &plan, tol),
        _ => outer_product(rule, &a, &plan, tol),
    };
    Ok(values
        .iter()
        .zip(&gaps)
        .map(|(v, g)| {
            let value = factor * v;
            let gap = factor * g;
            IndicatorIntegral {
                value,
                refinement_gap: gap,
                warning: gap > tol.rel * value.abs().max(f64::MIN_POSITIVE),
            }
        })
        .collect())
}

// One distinct core integral: exponents (E, 2j, 2k) of (rho, v, w) with E
// already including the n - 3 Jacobian power.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Key {
    e: u32,
    j: u32,
    k: u32,
}

struct Term {
    out: usize,
    coef: f64,
    z_exps: Vec<u32>,
    key: usize,
}

struct Plan {
    n: usize,
    outputs: usize,
    keys: Vec<Key>,
    terms: Vec<Term>,
}

impl Plan {
    fn new(n: usize, gs: &[SpherePolynomial]) -> Self {
        let mut keys: Vec<Key> = Vec::new();
        let mut terms = Vec::new();
        for (out, g) in gs.iter().enumerate() {
            for (coef, exps) in &g.terms {
                if exps.iter().any(|e| e % 2 == 1) || *coef == 0.0 {
                    continue;
                }
                let key = if n == 2 {
                    Key { e: 0, j: exps[0] / 2, k: exps[1] / 2 }
                } else {
                    let zsum: u32 = exps[..n - 2].iter().sum();
                    Key {
                        e: (n - 3) as u32 + zsum,
                        j: exps[n - 2] / 2,
                        k: exps[n - 1] / 2,
                    }
                };
                let idx = match keys.iter().position(|k| *k == key) {
                    Some(i) => i,
                    None => {
                        keys.push(key);
                        keys.len() - 1
                    }
                };
                let z_exps = if n >= 3 { exps[..n - 2].to_vec() } else { Vec::new() };
                terms.push(Term {
                    out,
                    coef: *coef,
                    z_exps,
                    key: idx,
                });
            }
        }
        Plan {
            n,
            outputs: gs.len(),
            keys,
            terms,
        }
    }

    // Sums terms per output given core values and a per-term z factor.
    fn combine<Z: Fn(&Term) -> f64>(&self, zfac: Z, core: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.outputs];
        for t in &self.terms {
            out[t.out] += t.coef * zfac(t) * core[t.key];
        }
        out
    }
}

fn powi(x: f64, k: u32) -> f64 {
    let mut r = 1.0;
    for _ in 0..k {
        r *= x;
    }
    r
}

const BETA_NODES: usize = 32;

struct BetaRule {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl BetaRule {
    fn new() -> Self {
        let (x, w) = gauss_legendre(BETA_NODES);
        BetaRule { x, w }
    }
}

/// Polar-angle interval where `A sin^2 + b cos^2 > 0`.
fn beta_interval(big_a: f64, b: f64) -> Option<(f64, f64)> {
    if big_a > 0.0 {
        if b >= 0.0 {
            Some((0.0, FRAC_PI_2))
        } else {
            Some((libm::atan2(libm::sqrt(-b), libm::sqrt(big_a)), FRAC_PI_2))
        }
    } else if b > 0.0 {
        Some((0.0, libm::atan2(libm::sqrt(b), libm::sqrt(-big_a))))
    } else {
        None
    }
}

/// Breakpoints in `alpha` in (0, pi/2) where `kappa sin^2 + a cos^2` crosses
/// zero or `b`.
fn alpha_breaks(kappa: f64, a: f64, b: f64) -> Vec<f64> {
    let mut br = vec![0.0];
    if kappa != a {
        for t in [0.0, b] {
            let s2 = (t - a) / (kappa - a);
            if s2 > 0.0 && s2 < 1.0 {
                br.push(libm::asin(libm::sqrt(s2)));
            }
        }
    }
    br.push(FRAC_PI_2);
    br.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
    br.dedup();
    br
}

/// Octant integrals `int chi sin^{E+2j+1}(beta) cos^{2k}(beta) sin^E(alpha)
/// cos^{2j}(alpha) dbeta dalpha` over the set where
/// `sin^2 beta (kappa sin^2 alpha + a cos^2 alpha) + b cos^2 beta > 0`.
fn core_integrals(kappa: f64, a: f64, b: f64, keys: &[Key], abs: f64) -> CoreResult {
    let br = BetaRule::new();
    let breaks = alpha_breaks(kappa, a, b);
    let tol = AdaptiveTol {
        abs,
        ..AdaptiveTol::default()
    };
    let dim = keys.len();
    let r = adaptive_gk(
        |alpha, out| {
            let (sa, ca) = (libm::sin(alpha), libm::cos(alpha));
            let big_a = kappa * sa * sa + a * ca * ca;
            out.iter_mut().for_each(|o| *o = 0.0);
            let Some((lo, hi)) = beta_interval(big_a, b) else {
                return;
            };
            if hi <= lo {
                return;
            }
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (t, w) in br.x.iter().zip(&br.w) {
                let beta = mid + half * t;
                let (sb, cb) = (libm::sin(beta), libm::cos(beta));
                for (o, key) in out.iter_mut().zip(keys) {
                    *o += w * powi(sb, key.e + 2 * key.j + 1) * powi(cb, 2 * key.k);
                }
            }
            for (o, key) in out.iter_mut().zip(keys) {
                *o *= half * powi(sa, key.e) * powi(ca, 2 * key.j);
            }
        },
        &breaks,
        dim,
        tol,
    );
    CoreResult {
        value: r.value,
        error: r.error,
    }
}

struct CoreResult {
    value: Vec<f64>,
    error: f64,
}

// n = 2: quarter circle, x = (cos phi, sin phi).
fn circle(a: &[f64], plan: &Plan, tol: IndicatorTol) -> (Vec<f64>, Vec<f64>) {
    let (a1, a2) = (a[0], a[1]);
    let mut breaks = vec![0.0];
    if a1 != a2 {
        let s2 = a1 / (a1 - a2);
        if s2 > 0.0 && s2 < 1.0 {
            breaks.push(libm::asin(libm::sqrt(s2)));
        }
    }
    breaks.push(FRAC_PI_2);
    let keys = &plan.keys;
    let r = adaptive_gk(
        |phi, out| {
            let (s, c) = (libm::sin(phi), libm::cos(phi));
            let inside = a1 * c * c + a2 * s * s > 0.0;
            for (o, k) in out.iter_mut().zip(keys) {
                *o = if inside { powi(c, 2 * k.j) * powi(s, 2 * k.k) } else { 0.0 };
            }
        },
        &breaks,
        keys.len(),
        AdaptiveTol {
            abs: tol.abs,
            ..AdaptiveTol::default()
        },
    );
    let vals = plan.combine(|_| 1.0, &r.value);
    (vals, vec![r.error; plan.outputs])
}

// n = 4: z = (cos phi, sin phi) on the quarter circle, integrated adaptively
// with breakpoints where kappa(z) changes sign.
fn outer_circle(a: &[f64], plan: &Plan, tol: IndicatorTol) -> (Vec<f64>, Vec<f64>) {
    let (a1, a2, a3, a4) = (a[0], a[1], a[2], a[3]);
    if a1 == a2 {
        let core = core_integrals(a1, a3, a4, &plan.keys, tol.abs);
        let zr = Rule1D::gauss_legendre(32, 0.0, FRAC_PI_2);
        let vals = plan.combine(
            |t| {
                zr.nodes
                    .iter()
                    .zip(&zr.weights)
                    .map(|(phi, w)| w * powi(libm::cos(*phi), t.z_exps[0]) * powi(libm::sin(*phi), t.z_exps[1]))
                    .sum()
            },
            &core.value,
        );
        return (vals, vec![core.error; plan.outputs]);
    }
    let mut breaks = vec![0.0];
    for t in [0.0, a3, a4] {
        let s2 = (t - a1) / (a2 - a1);
        if s2 > 0.0 && s2 < 1.0 {
            breaks.push(libm::asin(libm::sqrt(s2)));
        }
    }
    breaks.push(FRAC_PI_2);
    breaks.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
    breaks.dedup();
    let nterms = plan.terms.len();
    let inner_abs = 0.01 * tol.abs;
    let r = adaptive_gk(
        |phi, out| {
            let (c, s) = (libm::cos(phi), libm::sin(phi));
            let kappa = a1 * c * c + a2 * s * s;
            let core = core_integrals(kappa, a3, a4, &plan.keys, inner_abs);
            for (o, t) in out.iter_mut().zip(&plan.terms) {
                *o = t.coef * powi(c, t.z_exps[0]) * powi(s, t.z_exps[1]) * core.value[t.key];
            }
        },
        &breaks,
        nterms,
        AdaptiveTol {
            abs: tol.abs,
            ..AdaptiveTol::default()
        },
    );
    let mut vals = vec![0.0; plan.outputs];
    for (t, v) in plan.terms.iter().zip(&r.value) {
        vals[t.out] += v;
    }
    (vals, vec![r.error; plan.outputs])
}

// n >= 5. With equal leading coefficients the core integrals do not depend
// on z and the z moments come from a product rule. Otherwise the orthant of
// S^{n-3} is integrated by nested adaptive quadrature, see `nested_orthant`.
fn outer_product(rule: &SphereRule, a: &[f64], plan: &Plan, tol: IndicatorTol) -> (Vec<f64>, Vec<f64>) {
    let n = plan.n;
    let zdim = n - 2;
    let lead = &a[..zdim];
    if lead.iter().all(|x| *x == lead[0]) {
        let core = core_integrals(lead[0], a[n - 2], a[n - 1], &plan.keys, tol.abs);
        let m = (rule.order / 2).max(8);
        let zvals = orthant_moments(zdim, m, plan, |_| None);
        let vals = plan.combine_indexed(&zvals, &core.value);
        return (vals, vec![core.error; plan.outputs]);
    }
    let exps: Vec<Vec<u32>> = plan.terms.iter().map(|t| t.z_exps.clone()).collect();
    let keys: Vec<usize> = plan.terms.iter().map(|t| t.key).collect();
    let pair = (a[n - 2], a[n - 1]);
    let (per_term, err) = nested_orthant(lead, pair, &exps, &keys, &plan.keys, tol.abs, tol.rel);
    let mut vals = vec![0.0; plan.outputs];
    for (t, v) in plan.terms.iter().zip(&per_term) {
        vals[t.out] += t.coef * v;
    }
    (vals, vec![err; plan.outputs])
}

// Per-term integral of z^e * core(kappa(z))[key] over the positive orthant
// of S^{d-1}, kappa(z) = sum lead_i z_i^2. Peeling the last coordinate,
// z = (sin(psi) z', cos(psi)) turns the inner integral into the same problem
// in one dimension less with leading coefficients
// sin^2(psi) lead_i + cos^2(psi) lead_d. The psi integrand has kinks where
// one of those coefficients crosses 0, a_{n-1} or a_n.
fn nested_orthant(
    lead: &[f64],
    pair: (f64, f64),
    exps: &[Vec<u32>],
    term_keys: &[usize],
    keys: &[Key],
    abs: f64,
    rel: f64,
) -> (Vec<f64>, f64) {
    let d = lead.len();
    if d == 1 {
        let core = core_integrals(lead[0], pair.0, pair.1, keys, abs.max(0.01 * rel));
        return (term_keys.iter().map(|k| core.value[*k]).collect(), core.error);
    }
    let last = lead[d - 1];
    let mut breaks = vec![0.0, FRAC_PI_2];
    for ai in &lead[..d - 1] {
        if *ai == last {
            continue;
        }
        for t in [0.0, pair.0, pair.1] {
            let s2 = (t - last) / (ai - last);
            if s2 > 0.0 && s2 < 1.0 {
                breaks.push(libm::asin(libm::sqrt(s2)));
            }
        }
    }
    breaks.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
    breaks.dedup();
    let sub: Vec<Vec<u32>> = exps.iter().map(|e| e[..d - 1].to_vec()).collect();
    let powers: Vec<(u32, u32)> = exps
        .iter()
        .map(|e| ((d - 2) as u32 + e[..d - 1].iter().sum::<u32>(), e[d - 1]))
        .collect();
    let mut sub_lead = vec![0.0; d - 1];
    let r = adaptive_gk(
        |psi, out| {
            let (c, s) = (libm::cos(psi), libm::sin(psi));
            for (dst, ai) in sub_lead.iter_mut().zip(lead) {
                *dst = s * s * ai + c * c * last;
            }
            let (inner, _) = nested_orthant(&sub_lead, pair, &sub, term_keys, keys, abs, 0.1 * rel);
            for ((o, v), (ps, pc)) in out.iter_mut().zip(&inner).zip(&powers) {
                *o = v * powi(s, *ps) * powi(c, *pc);
            }
        },
        &breaks,
        exps.len(),
        AdaptiveTol {
            abs,
            rel,
            ..AdaptiveTol::default()
        },
    );
    (r.value, r.error)
}

impl Plan {
    fn combine_indexed(&self, per_term_z: &[f64], core: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.outputs];
        for (t, z) in self.terms.iter().zip(per_term_z) {
            out[t.out] += t.coef * z * core[t.key];
        }
        out
    }
}

// Integrates, over the positive orthant of S^{d-1}, either the per-term
// monomials z^{2e'} (when `core` returns None) or the per-output sums of
// coef * z^{2e'} * core(z)[key]. Returns per-term values in the first case
// and per-output values in the second.
fn orthant_moments<C>(d: usize, m: usize, plan: &Plan, mut core: C) -> Vec<f64>
where
    C: FnMut(&[f64]) -> Option<Vec<f64>>,
{
    let phi = Rule1D::gauss_legendre(m, 0.0, FRAC_PI_2);
    let psi: Vec<Rule1D> = (1..d - 1)
        .map(|j| {
            let mut r = Rule1D::gauss_legendre(m, 0.0, FRAC_PI_2);
            for (w, x) in r.weights.iter_mut().zip(&r.nodes) {
                *w *= powi(libm::sin(*x), j as u32);
            }
            r
        })
        .collect();
    let total = m.pow(d as u32 - 1);
    let mut z = vec![0.0; d];
    let mut angles = vec![0.0; d - 1];
    let nterms = plan.terms.len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(total);
    let mut per_output = false;
    for mut idx in 0..total {
        let k = idx % m;
        idx /= m;
        angles[0] = phi.nodes[k];
        let mut w = phi.weights[k];
        for (lvl, r) in psi.iter().enumerate() {
            let k = idx % m;
            idx /= m;
            angles[lvl + 1] = r.nodes[k];
            w *= r.weights[k];
        }
        to_cartesian(&angles, &mut z);
        let zfac = |t: &Term| t.z_exps.iter().zip(&z).map(|(&e, &zi)| powi(zi, e)).product::<f64>();
        match core(&z) {
            None => rows.push(plan.terms.iter().map(|t| w * zfac(t)).collect()),
            Some(cv) => {
                per_output = true;
                let mut row = vec![0.0; plan.outputs];
                for t in &plan.terms {
                    row[t.out] += w * t.coef * zfac(t) * cv[t.key];
                }
                rows.push(row);
            }
        }
    }
    let width = if per_output { plan.outputs } else { nterms };
    let mut col = vec![0.0; rows.len()];
    (0..width)
        .map(|c| {
            for (dst, row) in col.iter_mut().zip(&rows) {
                *dst = row[c];
            }
            pairwise_sum(&col)
        })
        .collect()
}

/// Monte Carlo estimate of a sphere integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Running mean and centered second moment of one block of samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl ChunkStats {
    pub const EMPTY: ChunkStats = ChunkStats {
        count: 0,
        mean: 0.0,
        m2: 0.0,
    };

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, other: &ChunkStats) -> ChunkStats {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        let nb = other.count as f64 / count as f64;
        ChunkStats {
            count,
            mean: self.mean + d * nb,
            m2: self.m2 + other.m2 + d * d * self.count as f64 * nb,
        }
    }
}

/// Merges chunk statistics by recursive halving.
pub fn merge_tree(chunks: &[ChunkStats]) -> ChunkStats {
    match chunks.len() {
        0 => ChunkStats::EMPTY,
        1 => chunks[0],
        len => {
            let mid = len / 2;
            merge_tree(&chunks[..mid]).merge(&merge_tree(&chunks[mid..]))
        }
    }
}

/// Samples per random-stream chunk.
pub const MC_CHUNK: u64 = 1024;

/// Number of chunks used for `samples` draws.
pub fn mc_chunk_count(samples: u64) -> u64 {
    samples.div_ceil(MC_CHUNK)
}

/// Statistics of chunk `index`: its samples come from stream `index` of the
/// ChaCha8 generator keyed by `seed`, so chunks are independent of each
/// other and of evaluation order.
pub fn mc_chunk<F: FnMut(&[f64]) -> f64>(n: usize, f: &mut F, samples: u64, seed: u64, index: u64) -> Result<ChunkStats> {
    let stats = mc_chunk_many(n, 1, &mut |x: &[f64], out: &mut [f64]| out[0] = f(x), samples, seed, index)?;
    Ok(stats[0])
}

/// [`mc_chunk`] for a vector-valued integrand writing `outputs` values;
/// every component sees the same sample points.
pub fn mc_chunk_many<F: FnMut(&[f64], &mut [f64])>(
    n: usize,
    outputs: usize,
    f: &mut F,
    samples: u64,
    seed: u64,
    index: u64,
) -> Result<Vec<ChunkStats>> {
    let start = index * MC_CHUNK;
    let count = MC_CHUNK.min(samples.saturating_sub(start));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut x = vec![0.0; n];
    let mut vals = vec![0.0; outputs];
    let mut stats = vec![ChunkStats::EMPTY; outputs];
    for _ in 0..count {
        loop {
            for xi in x.iter_mut() {
                *xi = StandardNormal.sample(&mut rng);
            }
            let r2: f64 = x.iter().map(|v| v * v).sum();
            if r2 > 0.0 {
                let inv = 1.0 / libm::sqrt(r2);
                x.iter_mut().for_each(|v| *v *= inv);
                break;
            }
        }
        f(&x, &mut vals);
        for (s, &v) in stats.iter_mut().zip(&vals) {
            if !v.is_finite() {
                return Err(Error::NonFinite { value: v, point: x });
            }
            s.push(v);
        }
    }
    Ok(stats)
}

/// Converts merged statistics into an estimate of the integral.
pub fn mc_estimate(n: usize, stats: &ChunkStats, seed: u64) -> McEstimate {
    let omega = sphere_area(n);
    let var = if stats.count > 1 {
        stats.m2 / (stats.count - 1) as f64
    } else {
        0.0
    };
    McEstimate {
        value: omega * stats.mean,
        std_error: omega * libm::sqrt(var.max(0.0) / stats.count.max(1) as f64),
        samples: stats.count,
        seed,
    }
}

/// Uniform Monte Carlo on S^{n-1} via normalized Gaussian vectors.
pub fn mc_integrate<F: FnMut(&[f64]) -> f64>(n: usize, mut f: F, samples: u64, seed: u64) -> Result<McEstimate> {
    if n < 2 {
        return Err(Error::domain("n must be ≥ 2"));
    }
    if samples < 1000 {
        return Err(Error::domain("at least 1000 samples are required"));
    }
    let chunks = (0..mc_chunk_count(samples))
        .map(|c| mc_chunk(n, &mut f, samples, seed, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(mc_estimate(n, &merge_tree(&chunks), seed))
}
