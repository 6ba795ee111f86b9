//! Calibration models for the change-time `V`, fitted by maximizing the
//! interval-censored likelihood `prod_i [S(L_i | Q_i) - S(R_i | Q_i)]`.

mod npmle;
mod phspline;
mod weibull;

pub use npmle::{fit_npmle, turnbull_intervals, NpmleFit, NpmleOptions};
pub use phspline::{fit_ph_spline, PhSplineFit};
pub use weibull::{fit_weibull, WeibullFit};

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::CensoringInterval;
use crate::error::{Error, Result};
use crate::splines::SplineBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Npmle,
    Weibull,
    PhSpline,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "npmle" | "np" => Ok(Family::Npmle),
            "weibull" => Ok(Family::Weibull),
            "ph-spline" | "ph" | "phspline" => Ok(Family::PhSpline),
            other => Err(Error::Config(format!(
                "unknown calibration family '{other}' (expected npmle, weibull or ph-spline)"
            ))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Npmle => "npmle",
            Family::Weibull => "weibull",
            Family::PhSpline => "ph-spline",
        })
    }
}

/// Stopping rules shared by the iterative fitters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Relative log-likelihood change below which iteration stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-7,
            max_iter: 1000,
        }
    }
}

/// A fitted distribution for the change-time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum CalibrationModel {
    Npmle(NpmleFit),
    Weibull(WeibullFit),
    PhSpline(PhSplineFit),
}

impl CalibrationModel {
    pub fn family(&self) -> Family {
        match self {
            CalibrationModel::Npmle(_) => Family::Npmle,
            CalibrationModel::Weibull(_) => Family::Weibull,
            CalibrationModel::PhSpline(_) => Family::PhSpline,
        }
    }

    /// Baseline cumulative hazard `H0(v)`, so that
    /// `S(v | q) = exp(-H0(v) * risk_multiplier(q))`. May be `+inf` for a
    /// step-function fit beyond its last support point.
    pub fn baseline_cumhaz(&self, v: f64) -> f64 {
        match self {
            CalibrationModel::Npmle(f) => -f.survival(v).ln(),
            CalibrationModel::Weibull(f) => f.cumhaz(v),
            CalibrationModel::PhSpline(f) => f.baseline_cumhaz(v),
        }
    }

    /// Number of calibration covariates the model expects.
    pub fn q_dim(&self) -> usize {
        match self {
            CalibrationModel::PhSpline(f) => f.psi.len(),
            _ => 0,
        }
    }

    pub fn risk_multiplier(&self, q: &[f64]) -> f64 {
        match self {
            CalibrationModel::PhSpline(f) => f.risk_multiplier(q),
            _ => 1.0,
        }
    }

    /// `P(V > v | Q = q)`.
    pub fn survival(&self, v: f64, q: &[f64]) -> f64 {
        if v <= 0.0 {
            return 1.0;
        }
        match self {
            CalibrationModel::Npmle(f) => f.survival(v),
            _ => (-self.baseline_cumhaz(v) * self.risk_multiplier(q)).exp(),
        }
    }

    pub fn loglik(&self) -> f64 {
        match self {
            CalibrationModel::Npmle(f) => f.loglik,
            CalibrationModel::Weibull(f) => f.loglik,
            CalibrationModel::PhSpline(f) => f.loglik,
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            CalibrationModel::Npmle(f) => f.converged,
            CalibrationModel::Weibull(f) => f.converged,
            CalibrationModel::PhSpline(f) => f.converged,
        }
    }

    /// Finite-dimensional parameter vector, `None` for the nonparametric fit.
    pub fn eta(&self) -> Option<Vec<f64>> {
        match self {
            CalibrationModel::Npmle(_) => None,
            CalibrationModel::Weibull(f) => Some(f.eta().to_vec()),
            CalibrationModel::PhSpline(f) => Some(f.eta()),
        }
    }

    /// Coordinates of `eta` that are not pinned to a constraint boundary.
    pub fn free_eta(&self) -> Vec<bool> {
        match self {
            CalibrationModel::Npmle(_) => Vec::new(),
            CalibrationModel::Weibull(_) => vec![true, true],
            CalibrationModel::PhSpline(f) => f.free_mask(),
        }
    }

    pub fn with_eta(&self, eta: &[f64]) -> Self {
        match self {
            CalibrationModel::Npmle(f) => CalibrationModel::Npmle(f.clone()),
            CalibrationModel::Weibull(f) => CalibrationModel::Weibull(f.with_eta(eta)),
            CalibrationModel::PhSpline(f) => CalibrationModel::PhSpline(f.with_eta(eta)),
        }
    }

    /// Per-subject log-likelihood contributions at the current parameters.
    pub fn subject_logliks(&self, intervals: &[CensoringInterval], q: &[Vec<f64>]) -> Vec<f64> {
        intervals
            .iter()
            .zip(q)
            .map(|(iv, qi)| {
                let r = self.risk_multiplier(qi);
                let hl = self.baseline_cumhaz(iv.left) * r;
                let hr = if iv.right.is_finite() {
                    self.baseline_cumhaz(iv.right) * r
                } else {
                    f64::INFINITY
                };
                interval_loglik(hl, hr)
            })
            .collect()
    }

    /// Analytic per-subject scores with respect to `eta`.
    pub fn subject_scores(&self, intervals: &[CensoringInterval], q: &[Vec<f64>]) -> Vec<Vec<f64>> {
        match self {
            CalibrationModel::Npmle(_) => vec![Vec::new(); intervals.len()],
            CalibrationModel::Weibull(f) => intervals.iter().map(|iv| f.subject_derivs(iv).1).collect(),
            CalibrationModel::PhSpline(f) => intervals
                .iter()
                .zip(q)
                .map(|(iv, qi)| f.subject_derivs(iv, qi).1)
                .collect(),
        }
    }

    /// Analytic Hessian of the total log-likelihood with respect to `eta`.
    pub fn loglik_hessian(&self, intervals: &[CensoringInterval], q: &[Vec<f64>]) -> DMatrix<f64> {
        match self {
            CalibrationModel::Npmle(_) => DMatrix::zeros(0, 0),
            CalibrationModel::Weibull(f) => f.totals(intervals).2,
            CalibrationModel::PhSpline(f) => f.totals(intervals, q).2,
        }
    }
}

/// `log[S(L) - S(R)]` written through cumulative hazards, stable when the
/// interval is short or `S(L)` is tiny.
pub(crate) fn interval_loglik(hl: f64, hr: f64) -> f64 {
    if hr.is_infinite() {
        return -hl;
    }
    let d = hr - hl;
    if !(d > 0.0) {
        return f64::NEG_INFINITY;
    }
    -hl + (-(-d).exp_m1()).ln()
}

/// Gradient and Hessian of `interval_loglik` given those of `H_L` and `H_R`.
pub(crate) struct IntervalDerivs<'a> {
    pub hl: f64,
    pub hr: f64,
    pub grad_hl: &'a DVector<f64>,
    pub grad_hr: &'a DVector<f64>,
    pub hess_hl: &'a DMatrix<f64>,
    pub hess_hr: &'a DMatrix<f64>,
}

impl IntervalDerivs<'_> {
    pub fn eval(&self) -> (f64, DVector<f64>, DMatrix<f64>) {
        let ll = interval_loglik(self.hl, self.hr);
        if self.hr.is_infinite() {
            return (ll, -self.grad_hl, -self.hess_hl);
        }
        let d = self.hr - self.hl;
        let em1 = d.exp_m1();
        let f1 = 1.0 / em1;
        let f2 = -f1 / (-(-d).exp_m1());
        let grad_d = self.grad_hr - self.grad_hl;
        let grad = -self.grad_hl + &grad_d * f1;
        let hess = -self.hess_hl + (self.hess_hr - self.hess_hl) * f1 + &grad_d * grad_d.transpose() * f2;
        (ll, grad, hess)
    }
}

/// Information criterion used to choose the number of interior knots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            other => Err(Error::Config(format!(
                "unknown criterion '{other}' (expected aic or bic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotCandidate {
    pub m: usize,
    pub loglik: Option<f64>,
    pub n_params: usize,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct KnotSelection {
    pub basis: SplineBasis,
    pub fit: PhSplineFit,
    pub selected_m: usize,
    pub trace: Vec<KnotCandidate>,
}

/// Fits one PH-spline model per candidate number of interior knots and
/// keeps the one with the smallest criterion. Candidates that fail are
/// skipped with a warning.
pub fn select_knots(
    intervals: &[CensoringInterval],
    q: &[Vec<f64>],
    candidates: &[usize],
    degree: usize,
    criterion: Criterion,
    opts: &FitOptions,
) -> Result<KnotSelection> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no knot candidates given".into()));
    }
    let n = intervals.len() as f64;
    let mut trace = Vec::new();
    let mut best: Option<(f64, KnotSelection)> = None;
    for &m in candidates {
        let attempt = SplineBasis::for_intervals(degree, m, intervals)
            .and_then(|basis| fit_ph_spline(intervals, q, &basis, opts, None).map(|f| (basis, f)));
        match attempt {
            Ok((basis, fit)) => {
                let k = fit.psi.len() + basis.dim();
                let aic = -2.0 * fit.loglik + 2.0 * k as f64;
                let bic = -2.0 * fit.loglik + k as f64 * n.ln();
                trace.push(KnotCandidate {
                    m,
                    loglik: Some(fit.loglik),
                    n_params: k,
                    aic: Some(aic),
                    bic: Some(bic),
                    error: None,
                });
                let score = match criterion {
                    Criterion::Aic => aic,
                    Criterion::Bic => bic,
                };
                if best.as_ref().is_none_or(|(s, _)| score < *s) {
                    best = Some((
                        score,
                        KnotSelection {
                            basis,
                            fit,
                            selected_m: m,
                            trace: Vec::new(),
                        },
                    ));
                }
            }
            Err(e) => {
                warn!("knot candidate m={m} failed: {e}");
                trace.push(KnotCandidate {
                    m,
                    loglik: None,
                    n_params: 0,
                    aic: None,
                    bic: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (_, mut sel) = best.ok_or_else(|| {
        Error::InvalidInput("every knot candidate failed to fit".into())
    })?;
    sel.trace = trace;
    Ok(sel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn interval_loglik_limits() {
        assert_eq!(interval_loglik(0.5, f64::INFINITY), -0.5);
        assert_eq!(interval_loglik(1.0, 1.0), f64::NEG_INFINITY);
        let direct = ((-0.2f64).exp() - (-0.9f64).exp()).ln();
        assert_relative_eq!(interval_loglik(0.2, 0.9), direct, max_relative = 1e-14);
    }

    #[test]
    fn family_names_round_trip() {
        for f in [Family::Npmle, Family::Weibull, Family::PhSpline] {
            assert_eq!(f.to_string().parse::<Family>().unwrap(), f);
        }
        assert!("cox".parse::<Family>().is_err());
    }
}
