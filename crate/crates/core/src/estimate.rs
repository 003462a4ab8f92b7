//! Correction-gain estimation for the linear phase-correction model.
//!
//! The model `A[n+1] = (1 - alpha) A[n] + T[n] + M[n+1] - M[n] - C[n]` is a
//! regression of `A[n+1] + C[n]` on `A[n]` with slope `1 - alpha`, intercept
//! equal to the mean timekeeper interval, and noise
//! `e[n] = T[n] + M[n+1] - M[n]`. That noise is MA(1): variance
//! `st^2 + 2 sm^2`, lag-one covariance `-sm^2`, zero beyond. Ordinary least
//! squares is biased here because `A[n]` contains `M[n]`, which also enters
//! `e[n]`. Generalised least squares under the MA(1) covariance removes that
//! bias, so the fit alternates between a GLS solve and re-estimating the two
//! noise variances from residual autocovariances, with both variances kept
//! non-negative and `alpha` kept in `[0, 2]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timing::{AsynchronySeries, CueSchedule, RelativeAsynchronyCurve};

pub const MAX_ITERATIONS: usize = 20;
pub const ALPHA_TOLERANCE: f64 = 1e-6;
const MIN_POINTS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("{available} regression points in the fit window, at least {required} needed")]
    InsufficientData { available: usize, required: usize },
    #[error("asynchronies are constant over the fit window")]
    DegenerateRegressor,
    #[error("relative asynchrony curve is missing offset {0}")]
    MissingOffset(i64),
    #[error("asynchrony at the first post-perturbation step is zero")]
    UndefinedBaselinePerturbation,
}

/// Which cue steps feed the fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitWindow {
    /// From the first displaced cue onset (perturbed step + 1) to the end.
    PostPerturbation,
    WholeTrial,
    /// Inclusive range of 1-based cue steps.
    Steps(usize, usize),
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow::PostPerturbation
    }
}

impl FitWindow {
    fn steps(&self, cue: &CueSchedule) -> (usize, usize) {
        match *self {
            FitWindow::PostPerturbation => (cue.perturbed_step() + 1, usize::MAX),
            FitWindow::WholeTrial => (1, usize::MAX),
            FitWindow::Steps(lo, hi) => (lo, hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseDecomposition {
    pub timekeeper_variance: f64,
    pub motor_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCorrectionEstimate {
    pub alpha_hat: f64,
    /// Estimated mean timekeeper interval (the regression intercept).
    pub timekeeper_mean: f64,
    pub residual_variance: f64,
    pub noise_decomposition: Option<NoiseDecomposition>,
    pub n_points: usize,
    pub bound_active: bool,
    pub iterations: usize,
}

/// Contiguous run of transitions `A[n] -> A[n+1]`. Neighbouring points in a
/// run share a motor term, so their noise is correlated.
#[derive(Debug, Clone, Default)]
struct Run {
    x: Vec<f64>,
    y: Vec<f64>,
}

fn collect_runs(series: &AsynchronySeries, lo: usize, hi: usize, runs: &mut Vec<Run>) {
    let pairs = series.pairs();
    let mut current = Run::default();
    for i in 1..pairs.len() {
        let (prev, next) = (&pairs[i - 1], &pairs[i]);
        let inside = prev.cue_step >= lo && next.cue_step <= hi;
        if inside && series.continues_previous(i) {
            current.x.push(prev.asynchrony);
            current.y.push(next.asynchrony + (next.cue_time - prev.cue_time));
        } else if !current.x.is_empty() {
            runs.push(std::mem::take(&mut current));
        }
    }
    if !current.x.is_empty() {
        runs.push(current);
    }
}

/// Solves `S z = v` for the symmetric tridiagonal Toeplitz matrix with unit
/// diagonal and off-diagonal `rho` (Thomas algorithm).
fn solve_tridiagonal(rho: f64, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = 1.0;
    for i in 0..n {
        if i > 0 {
            denom = 1.0 - rho * c[i - 1];
        }
        c[i] = rho / denom;
        d[i] = if i == 0 { v[0] } else { (v[i] - rho * d[i - 1]) / denom };
    }
    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        z[i] = if i + 1 == n { d[i] } else { d[i] - c[i] * z[i + 1] };
    }
    z
}

/// Weighted normal-equation sums for the design `[x, 1]` under correlation `rho`.
#[derive(Debug, Default)]
struct Normals {
    xx: f64,
    x1: f64,
    ones: f64,
    xy: f64,
    y1: f64,
}

fn normals(runs: &[Run], rho: f64) -> Normals {
    let mut acc = Normals::default();
    for run in runs {
        let ones = vec![1.0; run.x.len()];
        let wx = solve_tridiagonal(rho, &run.x);
        let w1 = solve_tridiagonal(rho, &ones);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        acc.xx += dot(&wx, &run.x);
        acc.x1 += wx.iter().sum::<f64>();
        acc.ones += w1.iter().sum::<f64>();
        acc.xy += dot(&wx, &run.y);
        acc.y1 += dot(&w1, &run.y);
    }
    acc
}

/// Residual variance and lag-one autocovariance within runs.
fn residual_moments(runs: &[Run], slope: f64, intercept: f64) -> (f64, f64) {
    let (mut ss, mut n0, mut lag, mut n1) = (0.0, 0usize, 0.0, 0usize);
    for run in runs {
        let r: Vec<f64> = run
            .x
            .iter()
            .zip(&run.y)
            .map(|(x, y)| y - slope * x - intercept)
            .collect();
        ss += r.iter().map(|v| v * v).sum::<f64>();
        n0 += r.len();
        lag += r.windows(2).map(|w| w[0] * w[1]).sum::<f64>();
        n1 += r.len().saturating_sub(1);
    }
    let k0 = ss / n0 as f64;
    let k1 = if n1 > 0 { lag / n1 as f64 } else { 0.0 };
    (k0, k1)
}

fn fit_runs(runs: &[Run]) -> Result<PhaseCorrectionEstimate, EstimateError> {
    let n_points: usize = runs.iter().map(|r| r.x.len()).sum();
    if n_points < MIN_POINTS {
        return Err(EstimateError::InsufficientData {
            available: n_points,
            required: MIN_POINTS,
        });
    }

    let all_x = runs.iter().flat_map(|r| r.x.iter().copied());
    let mean_x = all_x.clone().sum::<f64>() / n_points as f64;
    let ss_x: f64 = all_x.map(|x| (x - mean_x).powi(2)).sum();
    let scale = runs
        .iter()
        .flat_map(|r| r.y.iter().chain(&r.x))
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    if ss_x <= (1e-9 * scale).powi(2) * n_points as f64 {
        return Err(EstimateError::DegenerateRegressor);
    }

    // rho is the lag-one correlation of the noise; 0 starts from OLS.
    let mut rho = 0.0;
    let mut previous_alpha = f64::NAN;
    let mut estimate = PhaseCorrectionEstimate {
        alpha_hat: f64::NAN,
        timekeeper_mean: f64::NAN,
        residual_variance: 0.0,
        noise_decomposition: None,
        n_points,
        bound_active: false,
        iterations: 0,
    };

    for iteration in 1..=MAX_ITERATIONS {
        let s = normals(runs, rho);
        let det = s.xx * s.ones - s.x1 * s.x1;
        let mut slope = (s.ones * s.xy - s.x1 * s.y1) / det;
        let bound_active = !(-1.0..=1.0).contains(&slope);
        if bound_active {
            slope = slope.clamp(-1.0, 1.0);
        }
        // Intercept is re-optimised for the (possibly clamped) slope.
        let intercept = (s.y1 - slope * s.x1) / s.ones;
        let alpha = 1.0 - slope;

        let (k0, k1) = residual_moments(runs, slope, intercept);
        let motor_variance = (-k1).clamp(0.0, k0 / 2.0);
        let timekeeper_variance = k0 - 2.0 * motor_variance;

        estimate = PhaseCorrectionEstimate {
            alpha_hat: alpha,
            timekeeper_mean: intercept,
            residual_variance: k0,
            noise_decomposition: Some(NoiseDecomposition {
                timekeeper_variance,
                motor_variance,
            }),
            n_points,
            bound_active,
            iterations: iteration,
        };

        if (alpha - previous_alpha).abs() < ALPHA_TOLERANCE || !(k0 > f64::MIN_POSITIVE) {
            break;
        }
        previous_alpha = alpha;
        rho = -motor_variance / k0;
    }
    Ok(estimate)
}

/// Fits the correction gain to one trial.
pub fn fit_phase_correction(
    asynchronies: &AsynchronySeries,
    cue: &CueSchedule,
    window: FitWindow,
) -> Result<PhaseCorrectionEstimate, EstimateError> {
    let (lo, hi) = window.steps(cue);
    let mut runs = Vec::new();
    collect_runs(asynchronies, lo, hi, &mut runs);
    fit_runs(&runs)
}

/// Fits one correction gain and one timekeeper mean to several trials at once.
pub fn fit_phase_correction_pooled<'a>(
    trials: impl IntoIterator<Item = (&'a AsynchronySeries, &'a CueSchedule)>,
    window: FitWindow,
) -> Result<PhaseCorrectionEstimate, EstimateError> {
    let mut runs = Vec::new();
    for (series, cue) in trials {
        let (lo, hi) = window.steps(cue);
        collect_runs(series, lo, hi, &mut runs);
    }
    fit_runs(&runs)
}

/// Mean per-step correction over the five steps after the initial
/// displacement, as a percentage of that displacement:
/// `100 * mean_k (A[+k] - A[+k+1]) / A[+1]` for `k = 1..=5`.
pub fn percent_correction(curve: &RelativeAsynchronyCurve) -> Result<f64, EstimateError> {
    let value = |offset: i64| curve.at(offset).ok_or(EstimateError::MissingOffset(offset));
    let initial = value(1)?;
    let values = (1..=6).map(value).collect::<Result<Vec<_>, _>>()?;
    if initial == 0.0 {
        return Err(EstimateError::UndefinedBaselinePerturbation);
    }
    let total: f64 = values.windows(2).map(|w| (w[0] - w[1]) / initial).sum();
    Ok(100.0 * total / 5.0)
}
