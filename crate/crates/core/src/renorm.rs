//! The half-scale map `τ p_δ ↦ τ p_δ + Π(Z_{p_δ}, 1/2) + ξ` on normal-form
//! states, its iteration and the classification of trajectories.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::km::{km_from_block, project_z};
use crate::moments::{compute_moments_with, fourier_block2, MomentSet};
use crate::quadratic::{diagonalize, DeltaState, HarmonicQuadratic, DEFAULT_KAPPA0};
use crate::sphere::IndicatorTol;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Off,
    /// Uniform diagonal perturbation; step `k` draws from stream `k`.
    Random { seed: u64 },
    /// Perturbation chosen to push `max δ / (1 - δ̃)` upward.
    Adversarial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapConfig {
    pub n: usize,
    pub order: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub c_noise: f64,
    pub noise: NoiseMode,
    pub c_gamma: f64,
    pub kappa0: f64,
    pub tol_conv: f64,
    pub moment_tol: f64,
}

impl MapConfig {
    pub fn new(n: usize) -> Self {
        MapConfig {
            n,
            order: 64,
            gamma: 0.1,
            alpha: 0.2,
            c_noise: 0.0,
            noise: NoiseMode::Off,
            c_gamma: 1.0,
            kappa0: DEFAULT_KAPPA0,
            tol_conv: 1e-9,
            moment_tol: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::domain("n must be ≥ 2"));
        }
        if self.order < 2 {
            return Err(Error::domain("order must be ≥ 2"));
        }
        if !(self.gamma > 0.0 && self.gamma < 0.125) {
            return Err(Error::domain("gamma must lie in (0, 1/8)"));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.25) {
            return Err(Error::domain("alpha must lie in (0, 1/4)"));
        }
        if !(self.c_noise >= 0.0 && self.c_noise.is_finite()) {
            return Err(Error::domain("noise amplitude must be ≥ 0"));
        }
        if !(self.c_gamma >= 0.0 && self.c_gamma.is_finite()) {
            return Err(Error::domain("C_gamma must be ≥ 0"));
        }
        if !(self.kappa0 > 0.0 && self.kappa0 < 0.5) {
            return Err(Error::domain("kappa0 must lie in (0, 1/2)"));
        }
        if !(self.tol_conv > 0.0) {
            return Err(Error::domain("convergence tolerance must be positive"));
        }
        Ok(())
    }

    fn indicator_tol(&self) -> IndicatorTol {
        IndicatorTol {
            rel: self.moment_tol,
            ..IndicatorTol::default()
        }
    }
}

/// Everything one half step produces.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub state: DeltaState,
    /// `Π(Z_{p_δ}, 1/2)` in the frame of the input state.
    pub increment: HarmonicQuadratic,
    /// Diagonal of the perturbation, input frame.
    pub noise: Vec<f64>,
    pub defect: f64,
    /// `Σ C_i(δ)` of the input state.
    pub sum_c: f64,
    pub moment_warning: bool,
}

/// `Π(Z_{p_δ}, 1/2)` in the normal-form frame, with the moments it used.
pub fn z_increment(delta: &[f64], cfg: &MapConfig) -> Result<(HarmonicQuadratic, MomentSet)> {
    let m = compute_moments_with(delta, cfg.n, cfg.order, cfg.indicator_tol())?;
    let dec = km_from_block(&fourier_block2(&m), cfg.n)?;
    Ok((project_z(&dec, 0.5)?, m))
}

fn noise_vector(state: &DeltaState, cfg: &MapConfig, step: u64) -> Vec<f64> {
    let n = cfg.n;
    let eps = cfg.c_noise * libm::pow(state.tau, -cfg.alpha);
    if eps == 0.0 {
        return vec![0.0; n];
    }
    match cfg.noise {
        NoiseMode::Off => vec![0.0; n],
        NoiseMode::Adversarial => {
            let mut xi = vec![0.0; n];
            if n < 3 {
                return xi;
            }
            let jmax = argmax(&state.delta);
            xi[jmax] += 0.5 * eps;
            xi[n - 1] += 0.5 * eps;
            xi[n - 2] -= eps;
            xi
        }
        NoiseMode::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(step);
            let mut xi: Vec<f64> = (0..n)
                .map(|_| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0)
                .collect();
            let mean = xi.iter().sum::<f64>() / n as f64;
            xi.iter_mut().for_each(|x| *x -= mean);
            let sup = xi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if sup > 0.0 {
                xi.iter_mut().for_each(|x| *x *= eps / sup);
            }
            xi
        }
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn half_step(state: &DeltaState, cfg: &MapConfig) -> Result<StepReport> {
    half_step_at(state, cfg, 0)
}

/// Half step number `step`; the index only selects the random noise stream.
pub fn half_step_at(state: &DeltaState, cfg: &MapConfig, step: u64) -> Result<StepReport> {
    if state.n != cfg.n {
        return Err(Error::DimensionMismatch {
            expected: cfg.n,
            found: state.n,
        });
    }
    if !state.in_range(cfg.kappa0) {
        return Err(Error::domain(format!(
            "|delta| = {:e} is outside the kappa0 = {} ball",
            state.delta_norm(),
            cfg.kappa0
        )));
    }
    if !(state.tau > 1.0) {
        return Err(Error::domain("tau must exceed 1"));
    }
    let (increment, moments) = z_increment(&state.delta, cfg)?;
    let noise = noise_vector(state, cfg, step);
    let base = state.normal_form().scaled(state.tau);
    let mut diag = base.diag();
    for (i, d) in diag.iter_mut().enumerate() {
        *d += increment.entry(i, i) + noise[i];
    }
    let form = HarmonicQuadratic::diagonal_trace_free(&diag);
    let nf = diagonalize(&form, cfg.kappa0)?;
    let mut next = nf.state;
    next.q = compose(&state.q, &next.q, cfg.n);
    if nf.out_of_range {
        return Err(Error::Escape {
            norm: next.delta_norm(),
            kappa0: cfg.kappa0,
            state: alloc::boxed::Box::new(next),
        });
    }
    Ok(StepReport {
        state: next,
        increment,
        noise,
        defect: nf.defect,
        sum_c: moments.c,
        moment_warning: moments.warning,
    })
}

fn compose(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += a[i * n + k] * b[k * n + j];
            }
            out[i * n + j] = s;
        }
    }
    out
}

/// Entries of δ at or below this magnitude are rounding residue of the
/// normal form and take no part in the opposite-side checks.
pub const ZERO_FLOOR: f64 = 1e-13;

/// Sign of `Σ C_i(δ)`, selecting which half of the dichotomy applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `Σ C_i < 0`: large positive entries grow.
    Negative,
    /// `Σ C_i > 0`: the mirrored statement for large negative entries.
    Positive,
    Neutral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub regime: Regime,
    pub sum_c: f64,
    pub threshold: f64,
    /// Whether the extreme entry of δ exceeds the threshold.
    pub exceeds: bool,
    /// The extreme-ratio inequality, evaluated whenever `exceeds`.
    pub ratio_claim: Option<bool>,
    /// Per-axis checks `(axis, holds)` for entries on the opposite side.
    pub opposite_claims: Vec<(usize, bool)>,
}

impl MonotonicityReport {
    pub fn holds(&self) -> bool {
        !self.exceeds || (self.ratio_claim == Some(true) && self.opposite_claims.iter().all(|(_, ok)| *ok))
    }
}

/// Evaluates the growth predicates between `state` and `next`; `sum_c` is
/// `Σ C_i(δ)` of `state`.
///
/// Entries are matched across the step through the frames, since the
/// normal form re-sorts its axes.
pub fn check_monotonicity_with(state: &DeltaState, next: &DeltaState, sum_c: f64, cfg: &MapConfig) -> MonotonicityReport {
    let threshold = cfg.c_gamma * libm::pow(state.tau, -cfg.gamma);
    let regime = if sum_c < 0.0 {
        Regime::Negative
    } else if sum_c > 0.0 {
        Regime::Positive
    } else {
        Regime::Neutral
    };
    let mut report = MonotonicityReport {
        regime,
        sum_c,
        threshold,
        exceeds: false,
        ratio_claim: None,
        opposite_claims: Vec::new(),
    };
    if state.delta.is_empty() || regime == Regime::Neutral {
        return report;
    }
    let old_scale = 1.0 - state.delta_tilde();
    let new_scale = 1.0 - next.delta_tilde();
    let map = axis_map(state, next);
    let max_old = state.delta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_old = state.delta.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_new = next.delta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_new = next.delta.iter().cloned().fold(f64::INFINITY, f64::min);
    match regime {
        Regime::Negative => {
            report.exceeds = max_old > threshold;
            if report.exceeds {
                report.ratio_claim = Some(max_new / new_scale > max_old / old_scale);
                for (j, &dj) in state.delta.iter().enumerate() {
                    if dj < -ZERO_FLOOR && dj <= min_new {
                        if let Some(k) = map[j] {
                            report.opposite_claims.push((j, next.delta[k] / new_scale < dj / old_scale));
                        }
                    }
                }
            }
        }
        Regime::Positive => {
            report.exceeds = -min_old > threshold;
            if report.exceeds {
                report.ratio_claim = Some(min_new / new_scale < min_old / old_scale);
                for (j, &dj) in state.delta.iter().enumerate() {
                    if dj > ZERO_FLOOR && dj >= max_new {
                        if let Some(k) = map[j] {
                            report.opposite_claims.push((j, next.delta[k] / new_scale > dj / old_scale));
                        }
                    }
                }
            }
        }
        Regime::Neutral => {}
    }
    report
}

/// Recomputes `Σ C_i(δ)` and evaluates [`check_monotonicity_with`].
pub fn check_monotonicity(state: &DeltaState, next: &DeltaState, cfg: &MapConfig) -> Result<MonotonicityReport> {
    let m = compute_moments_with(&state.delta, cfg.n, cfg.order, cfg.indicator_tol())?;
    Ok(check_monotonicity_with(state, next, m.c, cfg))
}

// For each of the first n-2 old axes, the new axis carrying the same
// ambient direction, if it is also among the first n-2.
fn axis_map(old: &DeltaState, new: &DeltaState) -> Vec<Option<usize>> {
    let n = old.n;
    (0..n - 2)
        .map(|j| {
            let mut best = 0;
            let mut best_v = -1.0;
            for c in 0..n {
                let dot: f64 = (0..n).map(|r| old.q[r * n + j] * new.q[r * n + c]).sum();
                if dot.abs() > best_v {
                    best_v = dot.abs();
                    best = c;
                }
            }
            if best < n - 2 {
                Some(best)
            } else {
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub tau: f64,
    pub delta: Vec<f64>,
    /// `max δ / (1 - δ̃)`.
    pub ratio: f64,
    pub sum_abs_ddelta: f64,
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classification {
    Converged { delta_inf: Vec<f64> },
    /// The state left the κ0 ball on this step.
    Escaped { step: usize },
    Exhausted,
    /// A step failed for a reason other than escape.
    Failed { step: usize, message: String },
}

impl Classification {
    pub fn label(&self) -> &'static str {
        match self {
            Classification::Converged { .. } => "converged",
            Classification::Escaped { .. } => "escaped",
            Classification::Exhausted => "exhausted",
            Classification::Failed { .. } => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub config: MapConfig,
    /// Step 0 is the initial state. An escaping state is recorded as the
    /// last entry.
    pub steps: Vec<StepRecord>,
    pub classification: Classification,
    /// Constant `C` with `Σ_{j≤k} |Δδ_j| ≤ C Σ_{j≤k} τ_j^{-1-γ}` fitted on the
    /// first half of the trajectory.
    pub fitted_c: f64,
    /// Whether the fitted bound holds on the whole trajectory.
    pub dominated: bool,
    /// Sum of `|Δδ|` over the last quarter of the steps.
    pub tail: f64,
    /// Monotonicity report for each executed step.
    pub monotonicity: Vec<MonotonicityReport>,
}

impl TrajectoryRecord {
    pub fn tau_increasing(&self) -> bool {
        self.steps.windows(2).all(|w| w[1].tau > w[0].tau)
    }

    pub fn ratio_strictly_increasing(&self) -> bool {
        self.steps.windows(2).all(|w| w[1].ratio > w[0].ratio)
    }

    /// `Σ_{j≤k} τ_j^{-1-γ}` for every recorded k ≥ 1.
    pub fn tau_partial_sums(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.steps
            .iter()
            .skip(1)
            .map(|s| {
                acc += libm::pow(s.tau, -1.0 - self.config.gamma);
                acc
            })
            .collect()
    }
}

fn step_record(k: usize, s: &DeltaState, running: f64, defect: f64) -> StepRecord {
    StepRecord {
        k,
        tau: s.tau,
        delta: s.delta.clone(),
        ratio: s.max_ratio(),
        sum_abs_ddelta: running,
        defect,
    }
}

fn l1_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Applies up to `max_steps` half steps and classifies the trajectory.
pub fn iterate(state0: &DeltaState, cfg: &MapConfig, max_steps: usize) -> TrajectoryRecord {
    let mut steps = vec![step_record(0, state0, 0.0, 0.0)];
    let mut monotonicity = Vec::new();
    let mut state = state0.clone();
    let mut running = 0.0;
    let mut outcome = None;
    if let Err(e) = cfg.validate() {
        outcome = Some(Classification::Failed {
            step: 0,
            message: format!("{e}"),
        });
    }
    let mut k = 0;
    while outcome.is_none() && k < max_steps {
        k += 1;
        match half_step_at(&state, cfg, k as u64) {
            Ok(rep) => {
                let next = rep.state;
                running += matched_change(&state, &next);
                monotonicity.push(check_monotonicity_with(&state, &next, rep.sum_c, cfg));
                steps.push(step_record(k, &next, running, rep.defect));
                state = next;
            }
            Err(Error::Escape { state: escaped, .. }) => {
                let m = compute_moments_with(&state.delta, cfg.n, cfg.order, cfg.indicator_tol());
                if let Ok(m) = m {
                    monotonicity.push(check_monotonicity_with(&state, &escaped, m.c, cfg));
                }
                running += matched_change(&state, &escaped);
                steps.push(step_record(k, &escaped, running, 0.0));
                outcome = Some(Classification::Escaped { step: k });
            }
            Err(e) => {
                outcome = Some(Classification::Failed {
                    step: k,
                    message: format!("{e}"),
                });
            }
        }
    }

    let executed = steps.len() - 1;
    let quarter = executed.div_ceil(4);
    let tail = if executed == 0 {
        0.0
    } else {
        steps[executed].sum_abs_ddelta - steps[executed - quarter].sum_abs_ddelta
    };
    let mut record = TrajectoryRecord {
        config: cfg.clone(),
        steps,
        classification: Classification::Exhausted,
        fitted_c: 0.0,
        dominated: true,
        tail,
        monotonicity,
    };
    let partial = record.tau_partial_sums();
    let sums: Vec<f64> = record.steps.iter().skip(1).map(|s| s.sum_abs_ddelta).collect();
    let half = sums.len().div_ceil(2);
    record.fitted_c = sums[..half]
        .iter()
        .zip(&partial)
        .map(|(s, p)| s / p)
        .fold(0.0, f64::max);
    record.dominated = sums
        .iter()
        .zip(&partial)
        .all(|(s, p)| *s <= record.fitted_c * p * (1.0 + 1e-12));
    record.classification = match outcome {
        Some(c) => c,
        None if executed > 0 && tail < cfg.tol_conv && record.dominated => Classification::Converged {
            delta_inf: state.delta.clone(),
        },
        None => Classification::Exhausted,
    };
    record
}

// l1 change of δ with entries matched through the frames.
fn matched_change(old: &DeltaState, new: &DeltaState) -> f64 {
    let map = axis_map(old, new);
    let mut matched = 0.0;
    let mut used = vec![false; new.delta.len()];
    for (j, m) in map.iter().enumerate() {
        if let Some(k) = *m {
            if !used[k] {
                used[k] = true;
                matched += (new.delta[k] - old.delta[j]).abs();
                continue;
            }
        }
        return l1_diff(&old.delta, &new.delta);
    }
    matched
}

/// One cell of a basin sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tau0: f64,
    pub delta0: Vec<f64>,
    pub classification: Classification,
    pub steps: usize,
    pub final_tau: f64,
    pub final_ratio: f64,
    pub final_norm: f64,
}

pub fn sweep_cell(tau0: f64, delta0: &[f64], cfg: &MapConfig, max_steps: usize) -> Result<SweepRow> {
    let s0 = DeltaState::new(cfg.n, tau0, delta0.to_vec())?;
    let rec = iterate(&s0, cfg, max_steps);
    let last = rec.steps.last().expect("trajectory has an initial state");
    Ok(SweepRow {
        tau0,
        delta0: delta0.to_vec(),
        steps: last.k,
        final_tau: last.tau,
        final_ratio: last.ratio,
        final_norm: libm::sqrt(last.delta.iter().map(|d| d * d).sum()),
        classification: rec.classification,
    })
}

/// Sequential sweep over `(τ0, δ0)` cells.
pub fn sweep(cells: &[(f64, Vec<f64>)], cfg: &MapConfig, max_steps: usize) -> Result<Vec<SweepRow>> {
    cells.iter().map(|(t, d)| sweep_cell(*t, d, cfg, max_steps)).collect()
}

/// Magnitudes of the canned sweep used for calibrating `C_γ`.
pub const CALIBRATION_MAGNITUDES: [f64; 10] = [1e-6, 3e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2];

/// Canned calibration states at `τ = 10`: `±s e_1` and `s (e_1 - e_2)` when
/// `n ≥ 4`.
pub fn calibration_states(n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    for &s in &CALIBRATION_MAGNITUDES {
        for sign in [1.0, -1.0] {
            let mut d = vec![0.0; n - 2];
            d[0] = sign * s;
            out.push(d);
        }
        if n >= 4 {
            let mut d = vec![0.0; n - 2];
            d[0] = s;
            d[1] = -s;
            out.push(d);
        }
    }
    out
}

/// Smallest `C_γ` for which every canned step passes the monotonicity check:
/// the largest `|extreme δ| τ^γ` among the states whose check fails with the
/// threshold switched off.
pub fn calibrate_c_gamma(cfg: &MapConfig) -> Result<f64> {
    let tau = 10.0;
    let mut probe = cfg.clone();
    probe.c_gamma = 0.0;
    probe.noise = NoiseMode::Off;
    let mut c: f64 = 0.0;
    for d in calibration_states(cfg.n) {
        let s = DeltaState::new(cfg.n, tau, d)?;
        let rep = match half_step(&s, &probe) {
            Ok(r) => r,
            Err(Error::Escape { .. }) => continue,
            Err(e) => return Err(e),
        };
        let m = check_monotonicity_with(&s, &rep.state, rep.sum_c, &probe);
        if !m.holds() {
            let extreme = match m.regime {
                Regime::Positive => -s.delta.iter().cloned().fold(f64::INFINITY, f64::min),
                _ => s.delta.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            };
            c = c.max(extreme * libm::pow(tau, cfg.gamma));
        }
    }
    Ok(c)
}
