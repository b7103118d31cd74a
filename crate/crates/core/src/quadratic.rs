//! Harmonic (trace-free) quadratic forms and the delta normal form
//! `sum_i delta_i x_i^2 + (1 - sum delta) x_{n-1}^2 - x_n^2`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance for the trace-free invariant.
pub const TRACE_TOL: f64 = 1e-12;

/// Default radius of the small-delta ball.
pub const DEFAULT_KAPPA0: f64 = 0.2;

/// Residual allowed between the x_{n-1}^2 coefficient and 1 - sum(delta),
/// relative to tau, before a normal form reports a consistency defect.
pub const DEFECT_TOL: f64 = 1e-9;

/// A homogeneous harmonic quadratic `p(x) = x^T A x` with `trace A = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicQuadratic {
    n: usize,
    coeff: Vec<f64>,
}

impl HarmonicQuadratic {
    /// Builds a form from a row-major symmetric matrix. Fails if the matrix
    /// is not symmetric or not trace-free.
    pub fn from_row_major(n: usize, coeff: Vec<f64>) -> Result<Self> {
        if coeff.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: coeff.len(),
            });
        }
        if coeff.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("coefficients must be finite"));
        }
        let scale = coeff.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (coeff[i * n + j] - coeff[j * n + i]).abs() > TRACE_TOL * scale {
                    return Err(Error::domain(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        let q = HarmonicQuadratic { n, coeff };
        if q.trace().abs() > TRACE_TOL * scale.max(1.0) {
            return Err(Error::domain(format!(
                "form is not harmonic: trace = {:e}",
                q.trace()
            )));
        }
        Ok(q)
    }

    /// Diagonal form with the given coefficients.
    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut coeff = vec![0.0; n * n];
        for (i, d) in diag.iter().enumerate() {
            coeff[i * n + i] = *d;
        }
        Self::from_row_major(n, coeff)
    }

    /// Diagonal form after removing the mean of `diag`.
    pub fn diagonal_trace_free(diag: &[f64]) -> Self {
        let n = diag.len();
        let mean = diag.iter().sum::<f64>() / n as f64;
        let mut coeff = vec![0.0; n * n];
        for (i, d) in diag.iter().enumerate() {
            coeff[i * n + i] = d - mean;
        }
        HarmonicQuadratic { n, coeff }
    }

    pub fn zero(n: usize) -> Self {
        HarmonicQuadratic {
            n,
            coeff: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn coeff(&self) -> &[f64] {
        &self.coeff
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.coeff[i * self.n + j]
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.entry(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.entry(i, i)).sum()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.coeff[i * n + j] * x[j];
            }
            s += x[i] * row;
        }
        s
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        let scale = self.max_abs_entry().max(f64::MIN_POSITIVE);
        (0..self.n).all(|i| (0..self.n).all(|j| i == j || self.entry(i, j).abs() <= tol * scale))
    }

    fn max_abs_entry(&self) -> f64 {
        self.coeff.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        HarmonicQuadratic {
            n: self.n,
            coeff: self.coeff.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(HarmonicQuadratic {
            n: self.n,
            coeff: self.coeff.iter().zip(&other.coeff).map(|(a, b)| a + b).collect(),
        })
    }

    /// `x -> p(Q^T x)`, i.e. the matrix `Q A Q^T`, for an orthogonal `Q`
    /// given row-major.
    pub fn rotated(&self, q: &[f64]) -> Result<Self> {
        let n = self.n;
        if q.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: q.len(),
            });
        }
        let qm = DMatrix::from_row_slice(n, n, q);
        let r = &qm * self.matrix() * qm.transpose();
        Ok(HarmonicQuadratic {
            n,
            coeff: row_major(&r),
        })
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.coeff)
    }

    /// True when the sup-norm over the unit ball is one.
    pub fn is_normalized(&self, tol: f64) -> bool {
        (sup_norm_ball(self) - 1.0).abs() <= tol
    }
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Sup-norm of `q` over the closed unit ball: the largest |eigenvalue|.
pub fn sup_norm_ball(q: &HarmonicQuadratic) -> f64 {
    if q.is_diagonal(0.0) {
        return q.diag().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    }
    let eig = SymmetricEigen::new(q.matrix());
    eig.eigenvalues.iter().fold(0.0f64, |m, d| m.max(d.abs()))
}

/// `p_delta` for `delta` in R^{n-2}.
pub fn make_p_delta(n: usize, delta: &[f64]) -> Result<HarmonicQuadratic> {
    if n < 2 {
        return Err(Error::domain("n must be ≥ 2"));
    }
    if delta.len() != n - 2 {
        return Err(Error::DimensionMismatch {
            expected: n - 2,
            found: delta.len(),
        });
    }
    let mut diag = Vec::with_capacity(n);
    diag.extend_from_slice(delta);
    diag.push(1.0 - delta.iter().sum::<f64>());
    diag.push(-1.0);
    // trace is zero up to the rounding of 1 - sum(delta)
    let mut coeff = vec![0.0; n * n];
    for (i, d) in diag.iter().enumerate() {
        coeff[i * n + i] = *d;
    }
    Ok(HarmonicQuadratic { n, coeff })
}

/// The pair (tau, delta) plus the frame rotation: the represented polynomial
/// is `tau * p_delta(Q^T x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaState {
    pub n: usize,
    pub tau: f64,
    pub delta: Vec<f64>,
    /// Orthogonal frame, row-major; column `i` is the ambient direction of
    /// stored axis `i`.
    pub q: Vec<f64>,
}

impl DeltaState {
    /// State in the identity frame.
    pub fn new(n: usize, tau: f64, delta: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain("n must be ≥ 2"));
        }
        if delta.len() != n - 2 {
            return Err(Error::DimensionMismatch {
                expected: n - 2,
                found: delta.len(),
            });
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::domain("tau must be positive"));
        }
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            q[i * n + i] = 1.0;
        }
        Ok(DeltaState { n, tau, delta, q })
    }

    pub fn delta_tilde(&self) -> f64 {
        self.delta.iter().sum()
    }

    pub fn delta_norm(&self) -> f64 {
        libm::sqrt(self.delta.iter().map(|d| d * d).sum())
    }

    pub fn in_range(&self, kappa0: f64) -> bool {
        self.delta_norm() < kappa0
    }

    /// `max_j delta_j / (1 - delta_tilde)`; zero for n = 2.
    pub fn max_ratio(&self) -> f64 {
        match self.delta.iter().cloned().fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d)))) {
            Some(m) => m / (1.0 - self.delta_tilde()),
            None => 0.0,
        }
    }

    pub fn min_ratio(&self) -> f64 {
        match self.delta.iter().cloned().fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d)))) {
            Some(m) => m / (1.0 - self.delta_tilde()),
            None => 0.0,
        }
    }

    /// Normal form `p_delta` in the stored frame.
    pub fn normal_form(&self) -> HarmonicQuadratic {
        make_p_delta(self.n, &self.delta).expect("state dimensions are validated on construction")
    }

    /// The represented polynomial `tau * Q o p_delta` in the ambient frame.
    pub fn polynomial(&self) -> HarmonicQuadratic {
        self.normal_form()
            .scaled(self.tau)
            .rotated(&self.q)
            .expect("frame has matching dimension")
    }
}

/// Outcome of [`diagonalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalForm {
    pub state: DeltaState,
    /// `|coefficient of x_{n-1}^2 / tau - (1 - delta_tilde)|`.
    pub defect: f64,
    /// True when `defect` exceeds [`DEFECT_TOL`].
    pub has_defect: bool,
    /// True when `|delta| >= kappa0`.
    pub out_of_range: bool,
}

/// Brings a harmonic quadratic into the delta normal form.
///
/// Eigenvalues are ordered so that the most negative lands on axis n, the
/// largest on axis n-1 and the rest ascending on axes 1..n-2. Ties are
/// broken by descending index of the eigenvector's dominant component;
/// each eigenvector is signed so its largest-magnitude component is
/// positive.
pub fn diagonalize(q: &HarmonicQuadratic, kappa0: f64) -> Result<NormalForm> {
    let n = q.dim();
    if n < 2 {
        return Err(Error::domain("n must be ≥ 2"));
    }
    let (values, vectors) = eigen(q);
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::Degenerate("zero form has no normal form".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let dominant: Vec<usize> = (0..n).map(|k| dominant_index(&vectors[k])).collect();
    order.sort_by(|&a, &b| match values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal) {
        Ordering::Equal => dominant[b].cmp(&dominant[a]),
        o => o,
    });
    let most_negative = order[0];
    let largest = order[n - 1];
    if values[most_negative] >= 0.0 {
        return Err(Error::Degenerate("no strictly negative eigenvalue".into()));
    }
    let mut axes: Vec<usize> = order[1..n - 1].to_vec();
    axes.push(largest);
    axes.push(most_negative);

    let tau = -values[most_negative];
    let delta: Vec<f64> = axes[..n - 2].iter().map(|&k| values[k] / tau).collect();
    let delta_tilde: f64 = delta.iter().sum();
    let defect = (values[largest] / tau - (1.0 - delta_tilde)).abs();

    let mut frame = vec![0.0; n * n];
    for (col, &k) in axes.iter().enumerate() {
        for row in 0..n {
            frame[row * n + col] = vectors[k][row];
        }
    }
    let state = DeltaState {
        n,
        tau,
        delta,
        q: frame,
    };
    let out_of_range = !state.in_range(kappa0);
    Ok(NormalForm {
        state,
        defect,
        has_defect: defect > DEFECT_TOL,
        out_of_range,
    })
}

/// Eigenvalues and sign-normalized unit eigenvectors. Diagonal input is
/// returned exactly.
fn eigen(q: &HarmonicQuadratic) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = q.dim();
    if q.is_diagonal(0.0) {
        let vectors = (0..n)
            .map(|k| {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                e
            })
            .collect();
        return (q.diag(), vectors);
    }
    let eig = SymmetricEigen::new(q.matrix());
    let values = eig.eigenvalues.iter().cloned().collect();
    let vectors = (0..n)
        .map(|k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().cloned().collect();
            let d = dominant_index(&v);
            if v[d] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    (values, vectors)
}

fn dominant_index(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn p_delta_examples() {
        let p = make_p_delta(3, &[0.0]).unwrap();
        assert_eq!(p.diag(), vec![0.0, 1.0, -1.0]);
        let p = make_p_delta(4, &[0.01, 0.02]).unwrap();
        assert_relative_eq!(p.diag()[2], 0.97, max_relative = 1e-15);
        assert!(p.trace().abs() < 1e-15);
        let p = make_p_delta(2, &[]).unwrap();
        assert_eq!(p.diag(), vec![1.0, -1.0]);
        assert!(matches!(make_p_delta(4, &[0.1]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn sup_norm_examples() {
        let p0 = make_p_delta(3, &[0.0]).unwrap();
        assert_eq!(sup_norm_ball(&p0), 1.0);
        assert_eq!(sup_norm_ball(&p0.scaled(5.0)), 5.0);
        let q = HarmonicQuadratic::diagonal(&[0.2, 0.8, -1.0]).unwrap();
        assert_eq!(sup_norm_ball(&q), 1.0);
    }

    #[test]
    fn diagonalize_round_trip_identity_frame() {
        let q = make_p_delta(4, &[0.01, 0.02]).unwrap().scaled(5.0);
        let nf = diagonalize(&q, DEFAULT_KAPPA0).unwrap();
        assert_relative_eq!(nf.state.tau, 5.0, max_relative = 1e-15);
        assert_relative_eq!(nf.state.delta[0], 0.01, max_relative = 1e-14);
        assert_relative_eq!(nf.state.delta[1], 0.02, max_relative = 1e-14);
        let mut id = vec![0.0; 16];
        for i in 0..4 {
            id[i * 4 + i] = 1.0;
        }
        assert_eq!(nf.state.q, id);
        assert!(!nf.out_of_range && !nf.has_defect);
    }

    #[test]
    fn diagonalize_rotated_p0() {
        let (s, c) = (libm::sin(0.7), libm::cos(0.7));
        let rot = [1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c];
        let q = make_p_delta(3, &[0.0]).unwrap().scaled(3.0).rotated(&rot).unwrap();
        let nf = diagonalize(&q, DEFAULT_KAPPA0).unwrap();
        assert_relative_eq!(nf.state.tau, 3.0, max_relative = 1e-13);
        assert!(nf.state.delta[0].abs() < 1e-13);
        let back = nf.state.polynomial();
        for (a, b) in back.coeff().iter().zip(q.coeff()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonalize_flags_out_of_range() {
        let q = HarmonicQuadratic::diagonal(&[0.3, 0.3, -0.6]).unwrap();
        let nf = diagonalize(&q, DEFAULT_KAPPA0).unwrap();
        assert_relative_eq!(nf.state.tau, 0.6, max_relative = 1e-15);
        assert_relative_eq!(nf.state.delta[0], 0.5, max_relative = 1e-15);
        assert!(nf.out_of_range);
        assert!(!nf.has_defect);
    }

    #[test]
    fn diagonalize_rejects_degenerate() {
        assert!(matches!(
            diagonalize(&HarmonicQuadratic::zero(3), 0.2),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn rejects_non_harmonic() {
        assert!(HarmonicQuadratic::diagonal(&[1.0, 1.0, -1.0]).is_err());
        assert!(HarmonicQuadratic::from_row_major(2, vec![1.0, 0.5, 0.4, -1.0]).is_err());
    }

    #[test]
    fn delta_ordering_is_ascending_with_largest_on_axis_n_minus_1() {
        let q = HarmonicQuadratic::diagonal(&[0.05, -0.02, 0.97, -1.0]).unwrap();
        let nf = diagonalize(&q, 0.2).unwrap();
        assert_eq!(nf.state.delta, vec![-0.02, 0.05]);
        // frame swaps the first two axes
        assert_eq!(&nf.state.q[..4], &[0.0, 1.0, 0.0, 0.0]);
        assert_relative_eq!(nf.state.polynomial().coeff()[0], 0.05);
    }
}
