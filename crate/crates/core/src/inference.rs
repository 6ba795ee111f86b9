//! Sandwich covariance of the calibrated estimators, including the
//! correction for estimating the change-time model on the same data.
//!
//! With `U(theta, eta) = (1/n) d log L / d theta`, the influence of subject
//! `i` is `r_i = b_i - (dU/d eta) (1/n sum_j d^2 l_j/d eta^2)^{-1} d l_i/d eta`
//! and `Cov(theta_hat) = I^{-1} (sum_i r_i r_i') I^{-1}` with `I` the
//! observed information of the partial likelihood.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{CoxInput, CoxSolution, ExposureTable};
use crate::icfit::CalibrationModel;
use crate::linalg::{inverse, spd_inverse};

/// `(e^beta p / (1 + (e^beta - 1) p), z)`: the derivative of
/// `log E[exp(beta X + gamma' z)]` with respect to `(beta, gamma)`.
pub fn a_vector(theta: &[f64], p: f64, z: &[f64]) -> Vec<f64> {
    let e = theta[0].exp();
    std::iter::once(e * p / (1.0 + (e - 1.0) * p))
        .chain(z.iter().copied())
        .collect()
}

/// `(1/n)` times the score of the log partial likelihood.
pub fn score_u(input: &CoxInput<'_>, theta: &[f64]) -> DVector<f64> {
    input.evaluate(theta).1 / input.layout.n_subjects() as f64
}

/// Per-subject score contributions `b_i`, in dataset order:
/// the event term `a_i - S1/S0` at the subject's own event time, minus the
/// subject's share `w_i / S0` of every risk set it belongs to, weighted by
/// the number of events there. `sum_i b_i` equals the total score.
pub fn b_vectors(input: &CoxInput<'_>, theta: &[f64]) -> Vec<DVector<f64>> {
    let dim = input.dim();
    let layout = input.layout;
    let mut b = vec![DVector::zeros(dim); layout.n_subjects()];
    let wts = input.weights(theta);
    for k in 0..layout.n_times() {
        let sums = input.sums(&wts, k, false, false);
        let mean = &sums.s1 / sums.s0;
        let at_risk = layout.at_risk(k);
        let row = input.exposure.row(k);
        let events = layout.event_positions(k);
        for &j in events {
            let i = at_risk[j];
            let (_, ab) = input.weight(&wts, i, row[j]);
            b[i] += input.a_vec(i, ab) - &mean;
        }
        let d = events.len() as f64;
        for (&i, &p) in at_risk.iter().zip(row) {
            let (w, ab) = input.weight(&wts, i, p);
            let dev = input.a_vec(i, ab) - &mean;
            b[i].axpy(-d * w / sums.s0, &dev, 1.0);
        }
    }
    b
}

/// Relative curvature below which an `eta` coordinate counts as unidentified.
const WEAK_CURVATURE: f64 = 1e-9;

/// First-stage ingredients of the influence functions, restricted to the
/// free (off-boundary) coordinates of `eta`.
#[derive(Debug, Clone)]
pub struct Correction {
    /// Indices into the model's `eta` that are kept.
    pub free: Vec<usize>,
    /// `dU / d eta`, `dim theta x |free|`.
    pub cross: DMatrix<f64>,
    /// `(1/n) sum_i d^2 l_i / d eta^2`.
    pub calib_hessian: DMatrix<f64>,
    /// `d l_i / d eta` per subject.
    pub calib_scores: Vec<DVector<f64>>,
}

/// Builds the first-stage correction for `model`, or `None` for the
/// nonparametric family. `table_for` recomputes the exposure table under a
/// perturbed model; `dU/d eta` is taken by central differences with step
/// `1e-5 (1 + |eta_c|)` (forward when the backward step would cross
/// `alpha = 0`).
pub fn calibration_correction(
    input: &CoxInput<'_>,
    dataset: &Dataset,
    model: &CalibrationModel,
    theta: &[f64],
    table_for: impl Fn(&CalibrationModel) -> Result<ExposureTable>,
) -> Result<Option<Correction>> {
    let Some(eta) = model.eta() else {
        return Ok(None);
    };
    let n = dataset.len() as f64;
    let intervals = dataset.intervals();
    let q = dataset.q_rows();
    let scores_full = model.subject_scores(&intervals, &q);
    let hess_full = model.loglik_hessian(&intervals, &q);
    let mask = model.free_eta();
    let mut free: Vec<usize> = (0..eta.len()).filter(|&c| mask[c]).collect();
    // Coordinates the likelihood carries no curvature for (a spline member
    // whose support lies beyond the data) are held fixed like boundary ones.
    let top = free.iter().map(|&c| hess_full[(c, c)].abs()).fold(0.0, f64::max);
    free.retain(|&c| hess_full[(c, c)].abs() > WEAK_CURVATURE * top);
    if free.is_empty() {
        return Ok(None);
    }
    let calib_scores = scores_full
        .iter()
        .map(|s| DVector::from_iterator(free.len(), free.iter().map(|&c| s[c])))
        .collect();
    let calib_hessian = DMatrix::from_fn(free.len(), free.len(), |a, b| hess_full[(free[a], free[b])] / n);

    let alpha_start = match model {
        CalibrationModel::PhSpline(f) => f.psi.len(),
        _ => usize::MAX,
    };
    let score_under = |e: &[f64]| -> Result<DVector<f64>> {
        let perturbed = model.with_eta(e);
        let shifted = CoxInput {
            layout: input.layout,
            z: input.z.clone(),
            exposure: table_for(&perturbed)?,
        };
        Ok(score_u(&shifted, theta))
    };
    let mut cross = DMatrix::zeros(input.dim(), free.len());
    let base = score_u(input, theta);
    for (col, &c) in free.iter().enumerate() {
        let h = 1e-5 * (1.0 + eta[c].abs());
        let mut up = eta.clone();
        up[c] += h;
        let su = score_under(&up)?;
        let deriv = if c >= alpha_start && eta[c] - h < 0.0 {
            (su - &base) / h
        } else {
            let mut dn = eta.clone();
            dn[c] -= h;
            (su - score_under(&dn)?) / (2.0 * h)
        };
        cross.set_column(col, &deriv);
    }
    Ok(Some(Correction {
        free,
        cross,
        calib_hessian,
        calib_scores,
    }))
}

#[derive(Debug, Clone)]
pub struct SandwichComponents {
    /// `-dU/d theta`, the per-subject observed information.
    pub bread: DMatrix<f64>,
    pub b: Vec<DVector<f64>>,
    pub r: Vec<DVector<f64>>,
    /// `(1/n) sum_i r_i r_i'`.
    pub meat: DMatrix<f64>,
    /// Covariance of `theta_hat`: `bread^{-1} meat bread^{-1} / n`.
    pub covariance: DMatrix<f64>,
}

pub fn sandwich(
    input: &CoxInput<'_>,
    sol: &CoxSolution,
    correction: Option<&Correction>,
) -> Result<SandwichComponents> {
    let n = input.layout.n_subjects() as f64;
    let bread = &sol.information / n;
    let bread_inv = spd_inverse(&bread, "partial-likelihood information")?;
    let b = b_vectors(input, &sol.theta);
    let r: Vec<DVector<f64>> = match correction {
        None => b.clone(),
        Some(c) => {
            let hinv = inverse(&c.calib_hessian, "calibration-likelihood Hessian")?;
            let lever = &c.cross * hinv;
            b.iter()
                .zip(&c.calib_scores)
                .map(|(bi, si)| bi - &lever * si)
                .collect()
        }
    };
    let dim = input.dim();
    let mut meat = DMatrix::zeros(dim, dim);
    for ri in &r {
        meat.ger(1.0 / n, ri, ri, 1.0);
    }
    let covariance = &bread_inv * &meat * &bread_inv / n;
    let covariance = (&covariance + covariance.transpose()) * 0.5;
    if covariance.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular {
            what: "sandwich covariance".into(),
            condition: f64::INFINITY,
        });
    }
    Ok(SandwichComponents {
        bread,
        b,
        r,
        meat,
        covariance,
    })
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// `estimate -/+ z_{(1+level)/2} se`.
pub fn confidence_interval(estimate: f64, se: f64, level: f64) -> (f64, f64) {
    let z = standard_normal().inverse_cdf(0.5 * (1.0 + level));
    (estimate - z * se, estimate + z * se)
}

/// Upper tail `P(Z > x)` of the standard normal.
pub fn normal_sf(x: f64) -> f64 {
    standard_normal().sf(x)
}
