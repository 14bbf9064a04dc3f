//! Logistic S-curve model and its least-squares estimation.
//!
//! The model is `y = A / (1 + exp(-k (x - x_mid)))` with upper asymptote
//! `A`, slope parameter `k` and inflection abscissa `x_mid`. Parameters are
//! estimated by Levenberg-Marquardt on the sum of squared residuals. `A`
//! and `k` are optimized as `ln A` and `ln k`, which keeps both positive
//! without bound constraints.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;
use thiserror::Error;

use crate::stages::{self, PerStage, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogisticParams {
    /// Upper asymptote `A`, in units of y.
    pub asymptote: f64,
    /// Slope parameter `k`, per unit of x.
    pub rate: f64,
    /// Inflection abscissa `x_mid`.
    pub midpoint: f64,
}

impl LogisticParams {
    pub fn new(asymptote: f64, rate: f64, midpoint: f64) -> Self {
        LogisticParams {
            asymptote,
            rate,
            midpoint,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.asymptote > 0.0 && self.rate > 0.0 && self.midpoint.is_finite() && self.asymptote.is_finite() && self.rate.is_finite()
    }

    pub fn eval(&self, x: f64) -> f64 {
        logistic_eval(self, x)
    }

    /// Partial derivatives of the model at `x` with respect to
    /// `(A, k, x_mid)`.
    pub fn gradient(&self, x: f64) -> [f64; 3] {
        let z = self.rate * (x - self.midpoint);
        let s = unit_logistic(z);
        let ds = s * unit_logistic(-z);
        [
            s,
            self.asymptote * (x - self.midpoint) * ds,
            -self.asymptote * self.rate * ds,
        ]
    }

    fn to_internal(self) -> Vector3<f64> {
        Vector3::new(self.asymptote.ln(), self.rate.ln(), self.midpoint)
    }

    fn from_internal(theta: &Vector3<f64>) -> Self {
        LogisticParams::new(theta[0].exp(), theta[1].exp(), theta[2])
    }
}

/// `1 / (1 + exp(-z))`, evaluated without overflow for any finite `z`.
pub fn unit_logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Value of the logistic curve at `x`. Saturates to 0 or `A` far from the
/// inflection.
pub fn logistic_eval(params: &LogisticParams, x: f64) -> f64 {
    params.asymptote * unit_logistic(params.rate * (x - params.midpoint))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative change in the residual sum of squares that stops iteration.
    pub tol: f64,
    /// Starting point; derived from the data when absent.
    pub init: Option<LogisticParams>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 200,
            tol: 1e-10,
            init: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticFit {
    pub params: LogisticParams,
    pub r_squared: f64,
    pub f_value: f64,
    /// Observed minus fitted, in input order.
    pub residuals: Vec<f64>,
    pub n_points: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Residual sum of squares at the start and after every accepted step.
    #[serde(skip)]
    pub ssr_trace: Vec<f64>,
}

impl LogisticFit {
    pub fn ssr(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("all responses are equal; nothing to fit")]
    FlatData,
    #[error("no convergence after {} iterations", best.iterations)]
    NotConverged { best: Box<LogisticFit> },
    #[error("stages undefined for non-positive parameters")]
    StageUndefined,
}

impl FitError {
    pub fn kind(&self) -> &'static str {
        match self {
            FitError::DegenerateInput(_) => "DegenerateInput",
            FitError::FlatData => "FlatData",
            FitError::NotConverged { .. } => "NotConverged",
            FitError::StageUndefined => "StageUndefined",
        }
    }
}

fn validate(points: &[(f64, f64)]) -> Result<(), FitError> {
    if points.len() < 4 {
        return Err(FitError::DegenerateInput(format!(
            "need at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(FitError::DegenerateInput("non-finite coordinate".into()));
    }
    let y0 = points[0].1;
    if points.iter().all(|&(_, y)| y == y0) {
        return Err(FitError::FlatData);
    }
    let x0 = points[0].0;
    if points.iter().all(|&(x, _)| x == x0) {
        return Err(FitError::DegenerateInput("need at least two distinct x".into()));
    }
    if points.iter().all(|&(_, y)| y <= 0.0) {
        return Err(FitError::DegenerateInput("no positive response".into()));
    }
    Ok(())
}

/// Data-driven starting point.
///
/// `A0` sits 5% above the largest response; `x_mid0` is the abscissa whose
/// response is nearest `A0 / 2` (smaller x on ties); `k0 = 4 m / A0` where
/// `m` is the steepest secant between x-adjacent points, since the curve's
/// maximum slope is `A k / 4`.
pub fn initial_guess(points: &[(f64, f64)]) -> LogisticParams {
    let y_max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let a0 = 1.05 * y_max;
    let half = a0 / 2.0;
    let (_, midpoint) = points
        .iter()
        .map(|&(x, y)| ((y - half).abs(), x))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
        .expect("non-empty input");

    // Points sharing an abscissa collapse to their mean response.
    let mut sorted: Vec<(f64, f64)> = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut columns: Vec<(f64, f64, usize)> = Vec::new();
    for (x, y) in sorted {
        match columns.last_mut() {
            Some(last) if last.0 == x => {
                last.1 += y;
                last.2 += 1;
            }
            _ => columns.push((x, y, 1)),
        }
    }
    let steepest = columns
        .windows(2)
        .map(|w| {
            let (x1, s1, n1) = w[0];
            let (x2, s2, n2) = w[1];
            (s2 / n2 as f64 - s1 / n1 as f64) / (x2 - x1)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let span = columns.last().unwrap().0 - columns[0].0;
    let rate = if steepest > 0.0 && steepest.is_finite() {
        4.0 * steepest / a0
    } else {
        4.0 / span
    };
    LogisticParams::new(a0, rate, midpoint)
}

fn sum_sq_residuals(params: &LogisticParams, points: &[(f64, f64)]) -> f64 {
    points
        .iter()
        .map(|&(x, y)| {
            let r = y - logistic_eval(params, x);
            r * r
        })
        .sum()
}

/// Gauss-Newton normal equations in `(ln A, ln k, x_mid)`.
fn normal_equations(params: &LogisticParams, points: &[(f64, f64)]) -> (Matrix3<f64>, Vector3<f64>) {
    let mut jtj = Matrix3::zeros();
    let mut jtr = Vector3::zeros();
    for &(x, y) in points {
        let [da, dk, dm] = params.gradient(x);
        let row = Vector3::new(da * params.asymptote, dk * params.rate, dm);
        let r = y - logistic_eval(params, x);
        jtj += row * row.transpose();
        jtr += row * r;
    }
    (jtj, jtr)
}

/// Damping factor beyond which a step is too small to matter.
const LAMBDA_CEILING: f64 = 1e30;

/// Least-squares logistic fit by Levenberg-Marquardt.
///
/// Damping starts at 1e-3, shrinks tenfold after an accepted step and
/// grows tenfold after a rejected one. Every trial step counts toward
/// `max_iter`. Iteration stops once a step changes the residual sum of
/// squares by less than `tol` relative to its current value.
///
/// Without an explicit starting point the data-driven guess is tried first,
/// then the same guess with `k0` set from the x-span (`2 / span` and
/// `8 / span`). The steepest secant of a noisy cloud can be huge, which
/// starts the search on a step function it never leaves. The converged run
/// with the smallest residual sum of squares wins.
pub fn fit_logistic(points: &[(f64, f64)], options: &FitOptions) -> Result<LogisticFit, FitError> {
    validate(points)?;
    let starts = match options.init {
        Some(p) if p.is_valid() => vec![p],
        Some(p) => {
            return Err(FitError::DegenerateInput(format!(
                "initial parameters must have A > 0 and k > 0, got {p:?}"
            )))
        }
        None => candidate_starts(points),
    };
    let mut best: Option<(LogisticFit, bool)> = None;
    for start in starts {
        let (fit, converged) = run_from(start, points, options);
        let better = match &best {
            None => true,
            Some((b, b_conv)) => (converged, -fit.ssr()) > (*b_conv, -b.ssr()),
        };
        if better {
            best = Some((fit, converged));
        }
    }
    let (fit, converged) = best.expect("at least one start");
    if converged {
        Ok(fit)
    } else {
        Err(FitError::NotConverged { best: Box::new(fit) })
    }
}

fn candidate_starts(points: &[(f64, f64)]) -> Vec<LogisticParams> {
    let guess = initial_guess(points);
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let span = hi - lo;
    let mut starts = vec![guess];
    for c in [2.0, 8.0] {
        let rate = c / span;
        if rate.is_finite() && rate > 0.0 && rate != guess.rate {
            starts.push(LogisticParams { rate, ..guess });
        }
    }
    starts
}

/// One Levenberg-Marquardt run; returns the final fit and whether it converged.
fn run_from(start: LogisticParams, points: &[(f64, f64)], options: &FitOptions) -> (LogisticFit, bool) {
    let sum_y2: f64 = points.iter().map(|p| p.1 * p.1).sum();
    let negligible = 1e-28 * sum_y2;

    let mut theta = start.to_internal();
    let mut params = start;
    let mut ssr = sum_sq_residuals(&params, points);
    let mut trace = vec![ssr];
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = ssr <= negligible;

    'outer: while !converged && iterations < options.max_iter {
        let (jtj, jtr) = normal_equations(&params, points);
        let diag_floor = 1e-30 * jtj.diagonal().max();
        loop {
            if iterations >= options.max_iter || lambda > LAMBDA_CEILING {
                break 'outer;
            }
            iterations += 1;
            let mut h = jtj;
            for i in 0..3 {
                h[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
            }
            let Some(step) = h.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial_theta = theta + step;
            let trial = LogisticParams::from_internal(&trial_theta);
            let trial_ssr = if trial.is_valid() {
                sum_sq_residuals(&trial, points)
            } else {
                f64::NAN
            };
            if trial_ssr < ssr {
                let rel = (ssr - trial_ssr) / ssr;
                theta = trial_theta;
                params = trial;
                ssr = trial_ssr;
                trace.push(ssr);
                lambda = (lambda / 10.0).max(1e-12);
                if rel < options.tol || ssr <= negligible {
                    converged = true;
                }
                break;
            }
            if trial_ssr.is_finite() && trial_ssr - ssr <= options.tol * ssr {
                // The step cannot improve on the current point.
                converged = true;
                break 'outer;
            }
            lambda *= 10.0;
        }
    }

    (finish(params, points, iterations, converged, trace), converged)
}

/// Coefficient of determination and F statistic for a 3-parameter model.
pub fn goodness_of_fit(points: &[(f64, f64)], residuals: &[f64]) -> (f64, f64) {
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean).powi(2)).sum();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let r_squared = 1.0 - ss_res / ss_tot;
    let p = 3.0;
    let f_value = if ss_res == 0.0 {
        f64::INFINITY
    } else {
        ((ss_tot - ss_res) / (p - 1.0)) / (ss_res / (n - p))
    };
    (r_squared, f_value.max(0.0))
}

fn finish(
    params: LogisticParams,
    points: &[(f64, f64)],
    iterations: usize,
    converged: bool,
    ssr_trace: Vec<f64>,
) -> LogisticFit {
    let residuals: Vec<f64> = points.iter().map(|&(x, y)| y - logistic_eval(&params, x)).collect();
    let (r_squared, f_value) = goodness_of_fit(points, &residuals);
    LogisticFit {
        params,
        r_squared,
        f_value,
        n_points: points.len(),
        residuals,
        iterations,
        converged,
        ssr_trace,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitDiagnostics {
    pub r_squared: f64,
    pub f_value: f64,
    /// Mean absolute residual per stage; `None` for an empty stage.
    pub mean_abs_residual: PerStage<Option<f64>>,
    pub counts: PerStage<usize>,
}

/// Goodness of fit plus residual magnitude broken down by stage.
pub fn fit_diagnostics(fit: &LogisticFit, points: &[(f64, f64)]) -> Result<FitDiagnostics, FitError> {
    let cp = stages::critical_points(&fit.params).map_err(|_| FitError::StageUndefined)?;
    let residuals: Vec<f64> = points.iter().map(|&(x, y)| y - logistic_eval(&fit.params, x)).collect();
    let (r_squared, f_value) = goodness_of_fit(points, &residuals);
    let mut sums = PerStage::<f64>::default();
    let mut counts = PerStage::<usize>::default();
    for (&(x, _), r) in points.iter().zip(&residuals) {
        let stage = stages::classify(x, &cp);
        *sums.get_mut(stage) += r.abs();
        *counts.get_mut(stage) += 1;
    }
    let mean_abs_residual = PerStage::from_fn(|s: Stage| {
        let n = *counts.get(s);
        (n > 0).then(|| sums.get(s) / n as f64)
    });
    Ok(FitDiagnostics {
        r_squared,
        f_value,
        mean_abs_residual,
        counts,
    })
}
