use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{FitOptions, IntervalDerivs};
use crate::data::CensoringInterval;
use crate::error::{Error, Result};
use crate::linalg::damped_solve;

/// Weibull change-time model, `S(v) = exp(-(v / scale)^shape)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullFit {
    pub shape: f64,
    pub scale: f64,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    #[serde(skip)]
    pub trace: Vec<f64>,
}

const GRAD_TOL: f64 = 1e-6;

/// `H(v)` and its derivatives in `(log shape, log scale)`.
fn cumhaz_derivs(shape: f64, log_scale: f64, v: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
    if v <= 0.0 {
        return (0.0, DVector::zeros(2), DMatrix::zeros(2, 2));
    }
    let log_h = shape * (v.ln() - log_scale);
    let h = log_h.exp();
    let g = DVector::from_vec(vec![h * log_h, -shape * h]);
    let huu = h * log_h * (log_h + 1.0);
    let hus = -shape * h * (log_h + 1.0);
    let hss = shape * shape * h;
    (h, g, DMatrix::from_row_slice(2, 2, &[huu, hus, hus, hss]))
}

impl WeibullFit {
    fn with_params(shape: f64, scale: f64) -> Self {
        WeibullFit {
            shape,
            scale,
            loglik: f64::NEG_INFINITY,
            converged: false,
            iterations: 0,
            grad_norm: f64::INFINITY,
            trace: Vec::new(),
        }
    }

    pub fn cumhaz(&self, v: f64) -> f64 {
        if v <= 0.0 {
            0.0
        } else if v.is_infinite() {
            f64::INFINITY
        } else {
            (v / self.scale).powf(self.shape)
        }
    }

    pub fn survival(&self, v: f64) -> f64 {
        (-self.cumhaz(v)).exp()
    }

    /// `(log shape, log scale)`.
    pub fn eta(&self) -> [f64; 2] {
        [self.shape.ln(), self.scale.ln()]
    }

    pub fn with_eta(&self, eta: &[f64]) -> Self {
        WeibullFit {
            shape: eta[0].exp(),
            scale: eta[1].exp(),
            trace: Vec::new(),
            ..self.clone()
        }
    }

    pub(crate) fn subject_derivs(&self, iv: &CensoringInterval) -> (f64, Vec<f64>, DMatrix<f64>) {
        let log_scale = self.scale.ln();
        let (hl, gl, hl2) = cumhaz_derivs(self.shape, log_scale, iv.left);
        let (hr, gr, hr2) = if iv.right.is_finite() {
            cumhaz_derivs(self.shape, log_scale, iv.right)
        } else {
            (f64::INFINITY, DVector::zeros(2), DMatrix::zeros(2, 2))
        };
        let (ll, g, h) = IntervalDerivs {
            hl,
            hr,
            grad_hl: &gl,
            grad_hr: &gr,
            hess_hl: &hl2,
            hess_hr: &hr2,
        }
        .eval();
        (ll, g.iter().copied().collect(), h)
    }

    pub(crate) fn totals(&self, intervals: &[CensoringInterval]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let mut ll = 0.0;
        let mut g = DVector::zeros(2);
        let mut h = DMatrix::zeros(2, 2);
        for iv in intervals {
            let (l, gi, hi) = self.subject_derivs(iv);
            ll += l;
            g += DVector::from_vec(gi);
            h += hi;
        }
        (ll, g, h)
    }

    pub fn loglik_of(&self, intervals: &[CensoringInterval]) -> f64 {
        intervals
            .iter()
            .map(|iv| super::interval_loglik(self.cumhaz(iv.left), self.cumhaz(iv.right)))
            .sum()
    }
}

/// Maximum likelihood fit by damped Newton in `(log shape, log scale)`.
/// Without any finite right endpoint the likelihood increases without bound
/// in the scale, and a non-converged fit is returned.
pub fn fit_weibull(intervals: &[CensoringInterval], opts: &FitOptions) -> Result<WeibullFit> {
    if intervals.is_empty() {
        return Err(Error::InvalidInput("no censoring intervals to fit".into()));
    }
    let typical: Vec<f64> = intervals
        .iter()
        .filter_map(|iv| {
            if iv.right.is_finite() {
                Some(0.5 * (iv.left + iv.right))
            } else if iv.left > 0.0 {
                Some(iv.left)
            } else {
                None
            }
        })
        .collect();
    let start_scale = if typical.is_empty() {
        1.0
    } else {
        typical.iter().sum::<f64>() / typical.len() as f64
    };
    let mut fit = WeibullFit::with_params(1.0, start_scale);
    fit.loglik = fit.loglik_of(intervals);
    fit.trace.push(fit.loglik);
    if intervals.iter().all(|iv| iv.right.is_infinite()) {
        return Ok(fit);
    }

    for iter in 0..opts.max_iter {
        let (ll, g, h) = fit.totals(intervals);
        fit.loglik = ll;
        fit.grad_norm = g.norm();
        fit.iterations = iter;
        if fit.grad_norm < GRAD_TOL {
            fit.converged = true;
            break;
        }
        let Some(step) = damped_solve(&(-h), &g) else {
            break;
        };
        let eta = fit.eta();
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = fit.with_eta(&[eta[0] + scale * step[0], eta[1] + scale * step[1]]);
            let cl = cand.loglik_of(intervals);
            if cl.is_finite() && cl >= ll {
                fit.shape = cand.shape;
                fit.scale = cand.scale;
                fit.loglik = cl;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        fit.trace.push(fit.loglik);
        if !accepted || !(fit.shape.is_finite() && fit.scale.is_finite()) {
            break;
        }
        if fit.shape > 1e6 || fit.scale > 1e12 || fit.scale < 1e-12 {
            // Running off to a boundary of the parameter space.
            break;
        }
    }
    if !fit.converged {
        let (ll, g, _) = fit.totals(intervals);
        fit.loglik = ll;
        fit.grad_norm = g.norm();
        fit.converged = fit.grad_norm < GRAD_TOL;
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn iv(l: f64, r: f64) -> CensoringInterval {
        CensoringInterval::new(l, r).unwrap()
    }

    #[test]
    fn single_right_censored_interval_does_not_converge() {
        let fit = fit_weibull(&[iv(1.0, f64::INFINITY)], &FitOptions::default()).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn converges_on_mixed_data() {
        let data = [
            iv(0.0, 1.0),
            iv(0.5, 1.5),
            iv(1.0, 3.0),
            iv(2.0, f64::INFINITY),
            iv(0.0, 0.4),
            iv(1.2, 2.2),
        ];
        let fit = fit_weibull(&data, &FitOptions::default()).unwrap();
        assert!(fit.converged, "{fit:?}");
        assert!(fit.grad_norm < 1e-6);
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
        // Analytic gradient matches finite differences.
        let (_, g, _) = fit.totals(&data);
        let eta = fit.eta();
        let h = 1e-6;
        for k in 0..2 {
            let mut up = eta;
            up[k] += h;
            let mut dn = eta;
            dn[k] -= h;
            let fd = (fit.with_eta(&up).loglik_of(&data) - fit.with_eta(&dn).loglik_of(&data)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6);
        }
        assert_relative_eq!(fit.loglik, fit.loglik_of(&data), max_relative = 1e-12);
    }
}
