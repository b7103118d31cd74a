//! Harmonic-quadratic projection `Π(u, r, x0)` of a field sampled on a
//! cubic lattice: the trace-free part of the ball average of the
//! central-difference Hessian.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::quadratic::{sup_norm_ball, HarmonicQuadratic};

/// Values of `u` at `center + h * i` for every integer vector `i` with
/// `|i_k| ≤ half_width`, stored row-major with the last index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    n: usize,
    h: f64,
    half_width: usize,
    center: Vec<f64>,
    values: Vec<f64>,
}

impl SampledField {
    /// Samples `f` on the lattice covering the ball of radius `radius`.
    pub fn sample<F: FnMut(&[f64]) -> f64>(n: usize, h: f64, radius: f64, center: &[f64], mut f: F) -> Result<Self> {
        let half_width = Self::check_shape(n, h, radius, center)?;
        let side = 2 * half_width + 1;
        let total = side.pow(n as u32);
        let mut values = Vec::with_capacity(total);
        let mut y = vec![0.0; n];
        for idx in 0..total {
            let mut rest = idx;
            for k in (0..n).rev() {
                let i = (rest % side) as f64 - half_width as f64;
                rest /= side;
                y[k] = center[k] + h * i;
            }
            let v = f(&y);
            if !v.is_finite() {
                return Err(Error::NonFinite { value: v, point: y });
            }
            values.push(v);
        }
        Ok(SampledField {
            n,
            h,
            half_width,
            center: center.to_vec(),
            values,
        })
    }

    /// Wraps raw lattice values; `values.len()` must be `(2 half_width + 1)^n`.
    pub fn from_values(n: usize, h: f64, half_width: usize, center: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::check_shape(n, h, h * half_width as f64, &center)?;
        let expected = (2 * half_width + 1).pow(n as u32);
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: values.len(),
            });
        }
        Ok(SampledField {
            n,
            h,
            half_width,
            center,
            values,
        })
    }

    fn check_shape(n: usize, h: f64, radius: f64, center: &[f64]) -> Result<usize> {
        if n < 1 {
            return Err(Error::domain("n must be ≥ 1"));
        }
        if center.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: center.len(),
            });
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::domain("grid spacing must be positive"));
        }
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::domain("radius must be finite and ≥ 0"));
        }
        Ok(libm::ceil(radius / h - 1e-9) as usize)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// Radius of the largest centered ball inside the lattice.
    pub fn radius(&self) -> f64 {
        self.h * self.half_width as f64
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn at(&self, idx: &[i64]) -> f64 {
        let side = (2 * self.half_width + 1) as i64;
        let mut flat = 0i64;
        for &i in idx {
            flat = flat * side + i + self.half_width as i64;
        }
        self.values[flat as usize]
    }

    // Central-difference Hessian with step `s` lattice units at `idx`.
    fn hessian(&self, idx: &[i64], s: i64, out: &mut [f64], scratch: &mut Vec<i64>) {
        let n = self.n;
        let h2 = (s as f64 * self.h) * (s as f64 * self.h);
        scratch.clear();
        scratch.extend_from_slice(idx);
        let centre = self.at(idx);
        for a in 0..n {
            scratch[a] += s;
            let p = self.at(scratch);
            scratch[a] -= 2 * s;
            let m = self.at(scratch);
            scratch[a] += s;
            out[a * n + a] = (p - 2.0 * centre + m) / h2;
            for b in a + 1..n {
                let mut corner = |da: i64, db: i64| {
                    scratch[a] += da;
                    scratch[b] += db;
                    let v = self.at(scratch);
                    scratch[a] -= da;
                    scratch[b] -= db;
                    v
                };
                let v = (corner(s, s) - corner(s, -s) - corner(-s, s) + corner(-s, -s)) / (4.0 * h2);
                out[a * n + b] = v;
                out[b * n + a] = v;
            }
        }
    }
}

/// Outcome of [`project`].
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Sup-norm of `raw` over the unit ball.
    pub tau: f64,
    /// `raw / tau`, or `raw` itself when `tau = 0`.
    pub p: HarmonicQuadratic,
    /// The minimizing harmonic quadratic before normalization.
    pub raw: HarmonicQuadratic,
    /// Sup-norm difference between the spacing-h and spacing-2h results.
    pub fd_error: f64,
    /// Number of lattice points with nonzero weight.
    pub points: usize,
    /// Set when `tau < 10 fd_error`.
    pub ill_conditioned: bool,
}

// Ball average with boundary cells weighted by their approximate
// fraction inside the ball, clamp(1/2 + (r - |y|)/h, 0, 1).
fn averaged_hessian(field: &SampledField, r: f64, step: i64) -> (Vec<f64>, usize) {
    let n = field.n;
    let hw = field.half_width as i64;
    let side = 2 * hw + 1;
    let total = side.pow(n as u32);
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); n * n];
    let mut weights = Vec::new();
    let mut idx = vec![0i64; n];
    let mut scratch = Vec::with_capacity(n);
    let mut hess = vec![0.0; n * n];
    let r_units = r / field.h;
    let reach = libm::ceil(r_units + 0.5) as i64;
    for flat in 0..total {
        let mut rest = flat;
        let mut inside = true;
        let mut d2 = 0.0;
        for k in (0..n).rev() {
            let i = rest % side - hw;
            rest /= side;
            idx[k] = i;
            if i.abs() > reach {
                inside = false;
            }
            d2 += (i * i) as f64;
        }
        if !inside {
            continue;
        }
        let w = (0.5 + r_units - libm::sqrt(d2)).clamp(0.0, 1.0);
        if w == 0.0 {
            continue;
        }
        field.hessian(&idx, step, &mut hess, &mut scratch);
        for (c, v) in cols.iter_mut().zip(&hess) {
            c.push(w * v);
        }
        weights.push(w);
    }
    let total_w = pairwise_sum(&weights);
    let avg = cols
        .iter()
        .map(|c| if weights.is_empty() { 0.0 } else { pairwise_sum(c) / total_w })
        .collect();
    (avg, weights.len())
}

fn trace_free_half(m: &[f64], n: usize) -> HarmonicQuadratic {
    let tr: f64 = (0..n).map(|i| m[i * n + i]).sum();
    let mut coeff: Vec<f64> = m.iter().map(|v| 0.5 * v).collect();
    for i in 0..n {
        coeff[i * n + i] -= 0.5 * tr / n as f64;
    }
    // symmetrize exactly
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (coeff[i * n + j] + coeff[j * n + i]);
            coeff[i * n + j] = s;
            coeff[j * n + i] = s;
        }
    }
    HarmonicQuadratic::from_row_major(n, coeff).unwrap_or_else(|_| HarmonicQuadratic::zero(n))
}

/// `Π(u, r, x0)`. Needs the lattice to cover `B_{r + 3h}(x0)`: half a
/// cell for the boundary weights plus two cells for the spacing-2h
/// error estimate.
pub fn project(field: &SampledField, r: f64) -> Result<Projection> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::domain("r must be positive"));
    }
    let required = r + 3.0 * field.h;
    if required > field.radius() * (1.0 + 1e-12) {
        return Err(Error::Coverage {
            required,
            available: field.radius(),
        });
    }
    let n = field.n;
    let (fine, points) = averaged_hessian(field, r, 1);
    let (coarse, _) = averaged_hessian(field, r, 2);
    let raw = trace_free_half(&fine, n);
    let raw2 = trace_free_half(&coarse, n);
    let diff = raw.add(&raw2.scaled(-1.0))?;
    let fd_error = sup_norm_ball(&diff);
    let tau = sup_norm_ball(&raw);
    let p = if tau > 0.0 { raw.scaled(1.0 / tau) } else { raw.clone() };
    Ok(Projection {
        tau,
        p,
        raw,
        fd_error,
        points,
        ill_conditioned: tau < 10.0 * fd_error,
    })
}

/// `(Π(u, r), Π(u, r/2))`.
pub fn half_step_empirical(field: &SampledField, r: f64) -> Result<(Projection, Projection)> {
    Ok((project(field, r)?, project(field, 0.5 * r)?))
}
