//! Cox partial-likelihood engine shared by the naive and calibrated
//! estimators.
//!
//! Every method reduces to a table of exposure probabilities `p_i(t_k)` over
//! the risk sets. Subject `i` at event time `t_k` carries the weight
//! `exp(gamma' z_i) * (1 + p (e^beta - 1))`. The naive methods use
//! `p in {0, 1}`, and then the weight is exactly `exp(beta X + gamma' z)`.
//! Ties use the Breslow approximation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::calibration::{with_subject, RiskSetCalibration};
use crate::data::{Dataset, Subject};
use crate::error::{Error, Result};
use crate::icfit::CalibrationModel;
use crate::inference::{calibration_correction, confidence_interval, sandwich, Correction};
use crate::linalg::{damped_solve, from_dmatrix, spd_inverse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "LVCF")]
    Lvcf,
    #[serde(rename = "MIDI")]
    Midi,
    #[serde(rename = "OC")]
    Oc,
    #[serde(rename = "RSC")]
    Rsc,
    /// Cox fit on the true exposure paths of simulated data.
    #[serde(rename = "KNOWN")]
    Known,
}

impl Method {
    pub const ANALYSIS: [Method; 4] = [Method::Lvcf, Method::Midi, Method::Oc, Method::Rsc];

    pub fn needs_calibration(self) -> bool {
        matches!(self, Method::Oc | Method::Rsc)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lvcf" => Ok(Method::Lvcf),
            "midi" => Ok(Method::Midi),
            "oc" => Ok(Method::Oc),
            "rsc" => Ok(Method::Rsc),
            "known" => Ok(Method::Known),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected one of lvcf, midi, oc, rsc)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Lvcf => "LVCF",
            Method::Midi => "MIDI",
            Method::Oc => "OC",
            Method::Rsc => "RSC",
            Method::Known => "KNOWN",
        })
    }
}

/// Distinct event times and the risk set behind each one.
#[derive(Debug, Clone)]
pub struct RiskLayout {
    pub times: Vec<f64>,
    /// Subjects ordered by observed time; the risk set at `times[k]` is
    /// `order[start[k]..]`.
    order: Vec<usize>,
    start: Vec<usize>,
    /// Positions within the risk set of the subjects failing at `times[k]`.
    event_pos: Vec<Vec<usize>>,
    n: usize,
}

impl RiskLayout {
    pub fn new(dataset: &Dataset) -> Result<Self> {
        let subjects = dataset.subjects();
        let mut order: Vec<usize> = (0..subjects.len()).collect();
        order.sort_by(|&a, &b| subjects[a].obs_time.total_cmp(&subjects[b].obs_time).then(a.cmp(&b)));
        let mut times: Vec<f64> = subjects.iter().filter(|s| s.event).map(|s| s.obs_time).collect();
        if times.is_empty() {
            return Err(Error::NoEvents);
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut start = Vec::with_capacity(times.len());
        let mut event_pos = Vec::with_capacity(times.len());
        for &t in &times {
            let s = order.partition_point(|&i| subjects[i].obs_time < t);
            let pos = order[s..]
                .iter()
                .enumerate()
                .take_while(|(_, &i)| subjects[i].obs_time == t)
                .filter(|(_, &i)| subjects[i].event)
                .map(|(j, _)| j)
                .collect();
            start.push(s);
            event_pos.push(pos);
        }
        Ok(RiskLayout {
            times,
            order,
            start,
            event_pos,
            n: subjects.len(),
        })
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.n
    }

    /// Subject indices at risk at `times[k]`.
    pub fn at_risk(&self, k: usize) -> &[usize] {
        &self.order[self.start[k]..]
    }

    pub fn event_positions(&self, k: usize) -> &[usize] {
        &self.event_pos[k]
    }
}

/// `P(X_i(t_k) = 1 | history)` for every risk-set member at every event time.
#[derive(Debug, Clone)]
pub struct ExposureTable {
    values: Vec<Vec<f64>>,
}

impl ExposureTable {
    pub fn from_fn(
        layout: &RiskLayout,
        dataset: &Dataset,
        mut f: impl FnMut(&Subject, f64) -> Result<f64>,
    ) -> Result<Self> {
        let subjects = dataset.subjects();
        let values = (0..layout.n_times())
            .map(|k| {
                let t = layout.times[k];
                layout
                    .at_risk(k)
                    .iter()
                    .map(|&i| {
                        let p = f(&subjects[i], t)?;
                        if !(0.0..=1.0).contains(&p) {
                            return Err(Error::InvalidInput(format!(
                                "exposure probability {p} for subject {} at {t} is outside [0, 1]",
                                subjects[i].id
                            )));
                        }
                        Ok(p)
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        Ok(ExposureTable { values })
    }

    /// Calibrated probabilities from one change-time model, evaluating the
    /// baseline cumulative hazard once per event time and questionnaire.
    pub fn from_model(layout: &RiskLayout, dataset: &Dataset, model: &CalibrationModel) -> Result<Self> {
        let h_event: Vec<f64> = layout.times.iter().map(|&t| model.baseline_cumhaz(t)).collect();
        let subjects = dataset.subjects();
        let cache: Vec<(f64, Vec<f64>)> = subjects
            .iter()
            .map(|s| {
                (
                    model.risk_multiplier(&s.q),
                    s.quest_times.iter().map(|&w| model.baseline_cumhaz(w)).collect(),
                )
            })
            .collect();
        let mut values = Vec::with_capacity(layout.n_times());
        for (k, &t) in layout.times.iter().enumerate() {
            let row = layout
                .at_risk(k)
                .iter()
                .map(|&i| {
                    let s = &subjects[i];
                    let idx = s.quest_times.partition_point(|&w| w <= t);
                    if idx > 0 && s.quest_status[idx - 1] {
                        return Ok(1.0);
                    }
                    let (w, hw) = if idx == 0 { (0.0, 0.0) } else { (s.quest_times[idx - 1], cache[i].1[idx - 1]) };
                    if t <= w {
                        return Ok(0.0);
                    }
                    if hw.is_infinite() {
                        return Err(Error::InconsistentModel {
                            subject: s.id.clone(),
                            time: w,
                        });
                    }
                    let inc = (h_event[k] - hw).max(0.0) * cache[i].0;
                    Ok((-(-inc).exp_m1()).clamp(0.0, 1.0))
                })
                .collect::<Result<Vec<f64>>>()?;
            values.push(row);
        }
        Ok(ExposureTable { values })
    }

    /// Probabilities from the risk-set model attached to each event time.
    pub fn from_rsc(layout: &RiskLayout, dataset: &Dataset, rsc: &RiskSetCalibration) -> Result<Self> {
        Self::from_fn(layout, dataset, |s, t| {
            crate::calibration::prob_exposed(rsc.model_at(t), &s.history_at(t)).map_err(|e| with_subject(e, &s.id))
        })
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k]
    }
}

/// Inputs to the partial likelihood: risk sets, covariates and exposures.
#[derive(Debug, Clone)]
pub struct CoxInput<'a> {
    pub layout: &'a RiskLayout,
    pub z: Vec<&'a [f64]>,
    pub exposure: ExposureTable,
}

/// Per-risk-set sums for one event time.
pub(crate) struct RiskSums {
    pub s0: f64,
    pub s1: DVector<f64>,
    pub s2: DMatrix<f64>,
}

/// `e^beta` and `exp(gamma' z_i)` for every subject at one `theta`.
pub(crate) struct Weights {
    pub exp_beta: f64,
    pub exp_lin: Vec<f64>,
}

impl<'a> CoxInput<'a> {
    pub fn new(layout: &'a RiskLayout, dataset: &'a Dataset, exposure: ExposureTable) -> Self {
        CoxInput {
            layout,
            z: dataset.subjects().iter().map(|s| s.z.as_slice()).collect(),
            exposure,
        }
    }

    pub fn dim(&self) -> usize {
        1 + self.z.first().map_or(0, |z| z.len())
    }

    pub(crate) fn weights(&self, theta: &[f64]) -> Weights {
        Weights {
            exp_beta: theta[0].exp(),
            exp_lin: self
                .z
                .iter()
                .map(|z| theta[1..].iter().zip(*z).map(|(g, x)| g * x).sum::<f64>().exp())
                .collect(),
        }
    }

    /// Weight `w`, and `a`'s first entry `d log w / d beta`, for one subject.
    #[inline]
    pub(crate) fn weight(&self, wts: &Weights, i: usize, p: f64) -> (f64, f64) {
        let d = 1.0 + p * (wts.exp_beta - 1.0);
        (wts.exp_lin[i] * d, wts.exp_beta * p / d)
    }

    pub(crate) fn a_vec(&self, i: usize, a_beta: f64) -> DVector<f64> {
        let mut a = DVector::zeros(self.dim());
        a[0] = a_beta;
        for (dst, &z) in a.iter_mut().skip(1).zip(self.z[i]) {
            *dst = z;
        }
        a
    }

    /// `S^(0)`, `S^(1)` and, when `second`, `S^(2)` at event time `k`.
    /// With `curvature`, `S^(2)` also absorbs `a_beta (1 - a_beta)`, the
    /// second derivative of `log D`.
    pub(crate) fn sums(&self, wts: &Weights, k: usize, second: bool, curvature: bool) -> RiskSums {
        let dim = self.dim();
        let mut s0 = 0.0;
        let mut s1 = DVector::zeros(dim);
        let m = if second { dim } else { 0 };
        let mut s2 = DMatrix::zeros(m, m);
        for (&i, &p) in self.layout.at_risk(k).iter().zip(self.exposure.row(k)) {
            let (w, ab) = self.weight(wts, i, p);
            let z = self.z[i];
            s0 += w;
            s1[0] += w * ab;
            for (j, &x) in z.iter().enumerate() {
                s1[1 + j] += w * x;
            }
            if second {
                s2[(0, 0)] += w * ab * if curvature { 1.0 } else { ab };
                for (j, &x) in z.iter().enumerate() {
                    let wx = w * x;
                    s2[(0, 1 + j)] += wx * ab;
                    for (l, &y) in z.iter().enumerate().skip(j) {
                        s2[(1 + j, 1 + l)] += wx * y;
                    }
                }
            }
        }
        for r in 0..m {
            for c in 0..r {
                s2[(r, c)] = s2[(c, r)];
            }
        }
        RiskSums { s0, s1, s2 }
    }

    pub fn loglik(&self, theta: &[f64]) -> f64 {
        let wts = self.weights(theta);
        let mut ll = 0.0;
        for k in 0..self.layout.n_times() {
            let at_risk = self.layout.at_risk(k);
            let row = self.exposure.row(k);
            let mut s0 = 0.0;
            for (&i, &p) in at_risk.iter().zip(row) {
                s0 += self.weight(&wts, i, p).0;
            }
            let events = self.layout.event_positions(k);
            for &j in events {
                ll += self.weight(&wts, at_risk[j], row[j]).0.ln();
            }
            ll -= events.len() as f64 * s0.ln();
        }
        ll
    }

    /// Log partial likelihood, score and Hessian.
    pub fn evaluate(&self, theta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let wts = self.weights(theta);
        let dim = self.dim();
        let mut ll = 0.0;
        let mut g = DVector::zeros(dim);
        let mut h = DMatrix::zeros(dim, dim);
        for k in 0..self.layout.n_times() {
            let RiskSums { s0, s1, s2 } = self.sums(&wts, k, true, true);
            let at_risk = self.layout.at_risk(k);
            let row = self.exposure.row(k);
            let events = self.layout.event_positions(k);
            let d = events.len() as f64;
            for &j in events {
                let (w, ab) = self.weight(&wts, at_risk[j], row[j]);
                ll += w.ln();
                g += self.a_vec(at_risk[j], ab);
                h[(0, 0)] += ab * (1.0 - ab);
            }
            ll -= d * s0.ln();
            let mean = &s1 / s0;
            g.axpy(-d, &mean, 1.0);
            h -= (&s2 / s0 - &mean * mean.transpose()) * d;
        }
        (ll, g, h)
    }

    /// `sum_k d_k Cov_k(a)`: the risk-set covariance of the `a` vectors,
    /// positive semidefinite, singular exactly when the design is collinear.
    pub fn design_information(&self, theta: &[f64]) -> DMatrix<f64> {
        let wts = self.weights(theta);
        let dim = self.dim();
        let mut v = DMatrix::zeros(dim, dim);
        for k in 0..self.layout.n_times() {
            let RiskSums { s0, s1, s2 } = self.sums(&wts, k, true, false);
            let mean = &s1 / s0;
            let d = self.layout.event_positions(k).len() as f64;
            v += (&s2 / s0 - &mean * mean.transpose()) * d;
        }
        v
    }
}

/// Newton-Raphson solution of the partial-likelihood score equations.
#[derive(Debug, Clone)]
pub struct CoxSolution {
    pub theta: Vec<f64>,
    pub loglik: f64,
    /// Negative Hessian of the log partial likelihood at `theta`.
    pub information: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub score_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxOptions {
    pub max_iter: usize,
    pub max_halvings: usize,
    pub score_tol: f64,
    pub step_tol: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions {
            max_iter: 100,
            max_halvings: 20,
            score_tol: 1e-8,
            step_tol: 1e-8,
        }
    }
}

/// Names of the parameters spanning a null direction of `info`, or `None`
/// when `info` is well conditioned.
fn null_directions(info: &DMatrix<f64>, names: &[String]) -> Option<Vec<String>> {
    let eig = SymmetricEigen::new(info.clone());
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let mut cols = Vec::new();
    for (c, &e) in eig.eigenvalues.iter().enumerate() {
        if e <= 1e-10 * top.max(f64::MIN_POSITIVE) {
            let v = eig.eigenvectors.column(c);
            for (j, &x) in v.iter().enumerate() {
                if x.abs() > 0.1 && !cols.contains(&j) {
                    cols.push(j);
                }
            }
        }
    }
    cols.sort_unstable();
    (!cols.is_empty()).then(|| cols.into_iter().map(|j| names[j].clone()).collect())
}

pub fn cox_fit(input: &CoxInput<'_>, names: &[String], opts: &CoxOptions) -> Result<CoxSolution> {
    let dim = input.dim();
    let mut theta = vec![0.0; dim];
    if let Some(columns) = null_directions(&input.design_information(&theta), names) {
        return Err(Error::Collinear { columns });
    }
    let (mut ll, mut g, mut h) = input.evaluate(&theta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let Some(step) = damped_solve(&(-&h), &g) else {
            break;
        };
        let mut scale = 1.0;
        let mut moved = None;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + scale * s).collect();
            let cl = input.loglik(&cand);
            if cl.is_finite() && cl >= ll - 1e-12 * (1.0 + ll.abs()) {
                moved = Some(cand);
                break;
            }
            scale *= 0.5;
        }
        let Some(cand) = moved else { break };
        let step_norm = step.norm() * scale;
        theta = cand;
        (ll, g, h) = input.evaluate(&theta);
        if g.norm() < opts.score_tol && step_norm < opts.step_tol {
            converged = true;
            break;
        }
    }
    Ok(CoxSolution {
        theta,
        loglik: ll,
        information: -h,
        iterations,
        converged,
        score_norm: g.norm(),
    })
}

/// How the covariance of a main-model fit was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceKind {
    /// Inverse observed information.
    ModelBased,
    /// Sandwich with the first-stage correction.
    Sandwich,
    /// Sandwich without a first-stage correction.
    Robust,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainFit {
    pub method: Method,
    pub names: Vec<String>,
    pub beta: f64,
    pub gamma: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    pub se_beta: f64,
    pub variance: VarianceKind,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub score_norm: f64,
    pub n_subjects: usize,
    pub n_events: usize,
}

impl MainFit {
    pub fn theta(&self) -> Vec<f64> {
        std::iter::once(self.beta).chain(self.gamma.iter().copied()).collect()
    }

    fn from_solution(
        method: Method,
        dataset: &Dataset,
        sol: &CoxSolution,
        covariance: DMatrix<f64>,
        variance: VarianceKind,
    ) -> Self {
        let se: Vec<f64> = (0..covariance.nrows()).map(|j| covariance[(j, j)].max(0.0).sqrt()).collect();
        MainFit {
            method,
            names: parameter_names(dataset),
            beta: sol.theta[0],
            gamma: sol.theta[1..].to_vec(),
            se_beta: se[0],
            se,
            covariance: from_dmatrix(&covariance),
            variance,
            loglik: sol.loglik,
            iterations: sol.iterations,
            converged: sol.converged,
            score_norm: sol.score_norm,
            n_subjects: dataset.len(),
            n_events: dataset.n_events(),
        }
    }

    /// Estimates, standard errors, normal confidence intervals, hazard
    /// ratios and two-sided p-values.
    pub fn report(&self, level: f64) -> FitReport {
        let coefficients = self
            .names
            .iter()
            .zip(self.theta())
            .zip(&self.se)
            .map(|((name, est), &se)| {
                let (lo, hi) = confidence_interval(est, se, level);
                let p_value = if se > 0.0 {
                    2.0 * crate::inference::normal_sf((est / se).abs())
                } else {
                    f64::NAN
                };
                Coefficient {
                    name: name.clone(),
                    estimate: est,
                    se,
                    hazard_ratio: est.exp(),
                    ci_lower: lo,
                    ci_upper: hi,
                    hr_ci_lower: lo.exp(),
                    hr_ci_upper: hi.exp(),
                    p_value,
                }
            })
            .collect();
        FitReport {
            method: self.method,
            level,
            variance: self.variance,
            coefficients,
            loglik: self.loglik,
            iterations: self.iterations,
            converged: self.converged,
            n_subjects: self.n_subjects,
            n_events: self.n_events,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub hazard_ratio: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub hr_ci_lower: f64,
    pub hr_ci_upper: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub method: Method,
    pub level: f64,
    pub variance: VarianceKind,
    pub coefficients: Vec<Coefficient>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_subjects: usize,
    pub n_events: usize,
}

pub fn parameter_names(dataset: &Dataset) -> Vec<String> {
    std::iter::once("exposure".to_string())
        .chain(dataset.z_names().iter().cloned())
        .collect()
}

/// Cox fit with deterministic exposure paths and model-based covariance.
fn fit_naive(
    dataset: &Dataset,
    method: Method,
    opts: &CoxOptions,
    path: impl Fn(&Subject, f64) -> Result<bool>,
) -> Result<MainFit> {
    let layout = RiskLayout::new(dataset)?;
    let table = ExposureTable::from_fn(&layout, dataset, |s, t| path(s, t).map(|x| if x { 1.0 } else { 0.0 }))?;
    let input = CoxInput::new(&layout, dataset, table);
    let sol = cox_fit(&input, &parameter_names(dataset), opts)?;
    let cov = spd_inverse(&sol.information, "observed information")?;
    Ok(MainFit::from_solution(method, dataset, &sol, cov, VarianceKind::ModelBased))
}

/// Last value carried forward: `X(t) = X(w_bar(t))`.
pub fn fit_lvcf(dataset: &Dataset) -> Result<MainFit> {
    fit_naive(dataset, Method::Lvcf, &CoxOptions::default(), |s, t| Ok(s.lvcf_exposure(t)))
}

/// Midpoint imputation of the change-time, LVCF for right-censored intervals.
pub fn fit_midi(dataset: &Dataset) -> Result<MainFit> {
    fit_naive(dataset, Method::Midi, &CoxOptions::default(), |s, t| {
        Ok(match s.midpoint_impute() {
            Some(v) => t >= v,
            None => s.lvcf_exposure(t),
        })
    })
}

/// Cox fit on the true exposure paths; every subject must carry its change-time.
pub fn fit_known(dataset: &Dataset) -> Result<MainFit> {
    fit_naive(dataset, Method::Known, &CoxOptions::default(), |s, t| {
        s.true_exposure(t)
            .ok_or_else(|| Error::invalid_subject(&s.id, "true change-time unknown"))
    })
}

/// Cox fit with an arbitrary exposure-probability callback and robust
/// (first-stage-free) sandwich covariance.
pub fn fit_with_exposure(
    dataset: &Dataset,
    method: Method,
    f: impl FnMut(&Subject, f64) -> Result<f64>,
) -> Result<MainFit> {
    let layout = RiskLayout::new(dataset)?;
    let table = ExposureTable::from_fn(&layout, dataset, f)?;
    let input = CoxInput::new(&layout, dataset, table);
    let sol = cox_fit(&input, &parameter_names(dataset), &CoxOptions::default())?;
    let cov = sandwich(&input, &sol, None)?.covariance;
    Ok(MainFit::from_solution(method, dataset, &sol, cov, VarianceKind::Robust))
}

/// Ordinary calibration: the calibrated partial likelihood with
/// probabilities from `model`, sandwich covariance correcting for the
/// first-stage fit of `model` on the same data.
pub fn fit_oc(dataset: &Dataset, model: &CalibrationModel) -> Result<MainFit> {
    let layout = RiskLayout::new(dataset)?;
    let table = ExposureTable::from_model(&layout, dataset, model)?;
    let input = CoxInput::new(&layout, dataset, table);
    let sol = cox_fit(&input, &parameter_names(dataset), &CoxOptions::default())?;
    let correction = calibration_correction(&input, dataset, model, &sol.theta, |m| {
        ExposureTable::from_model(&layout, dataset, m)
    })?;
    finish_calibrated(Method::Oc, dataset, &input, &sol, correction)
}

/// Risk-set calibration. The covariance uses the ordinary-calibration
/// correction built from the baseline (time-zero) model.
pub fn fit_rsc(dataset: &Dataset, rsc: &RiskSetCalibration) -> Result<MainFit> {
    let layout = RiskLayout::new(dataset)?;
    let table = ExposureTable::from_rsc(&layout, dataset, rsc)?;
    let input = CoxInput::new(&layout, dataset, table);
    let sol = cox_fit(&input, &parameter_names(dataset), &CoxOptions::default())?;
    let baseline = rsc.baseline();
    let correction = calibration_correction(&input, dataset, baseline, &sol.theta, |m| {
        ExposureTable::from_model(&layout, dataset, m)
    })?;
    finish_calibrated(Method::Rsc, dataset, &input, &sol, correction)
}

fn finish_calibrated(
    method: Method,
    dataset: &Dataset,
    input: &CoxInput<'_>,
    sol: &CoxSolution,
    correction: Option<Correction>,
) -> Result<MainFit> {
    let kind = if correction.is_some() {
        VarianceKind::Sandwich
    } else {
        VarianceKind::Robust
    };
    let parts = sandwich(input, sol, correction.as_ref())?;
    Ok(MainFit::from_solution(method, dataset, sol, parts.covariance, kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn subject(id: &str, t: f64, event: bool, z: f64, quest: &[(f64, bool)]) -> Subject {
        Subject::new(
            id,
            t,
            event,
            vec![z],
            vec![],
            quest.iter().map(|q| q.0).collect(),
            quest.iter().map(|q| q.1).collect(),
            true,
        )
        .unwrap()
    }

    #[test]
    fn tied_balanced_pair_gives_zero() {
        let mk = |id: &str| Subject::new(id, 1.0, true, vec![], vec![], vec![], vec![], true).unwrap();
        let d = Dataset::new(vec![mk("a"), mk("b")], true).unwrap();
        let fit = fit_with_exposure(&d, Method::Known, |s, _| Ok(if s.id == "a" { 1.0 } else { 0.0 })).unwrap();
        assert!(fit.converged);
        assert!(fit.beta.abs() < 1e-12, "{}", fit.beta);
    }

    #[test]
    fn score_matches_finite_differences() {
        let d = Dataset::new(
            vec![
                subject("a", 1.0, true, 0.3, &[(0.5, false)]),
                subject("b", 1.5, false, -0.2, &[(0.4, false), (1.2, true)]),
                subject("c", 2.0, true, 0.9, &[(0.7, true)]),
                subject("d", 2.5, true, -1.1, &[]),
                subject("e", 3.0, false, 0.0, &[(2.0, false)]),
            ],
            true,
        )
        .unwrap();
        let layout = RiskLayout::new(&d).unwrap();
        let table = ExposureTable::from_fn(&layout, &d, |s, t| Ok((0.1 * t + 0.2 * s.z[0].abs()).min(1.0))).unwrap();
        let input = CoxInput::new(&layout, &d, table);
        let theta = [0.4, -0.7];
        let (_, g, h) = input.evaluate(&theta);
        for c in 0..2 {
            let step = 1e-6;
            let mut up = theta;
            up[c] += step;
            let mut dn = theta;
            dn[c] -= step;
            let fd = (input.loglik(&up) - input.loglik(&dn)) / (2.0 * step);
            assert_relative_eq!(fd, g[c], max_relative = 1e-6);
            let gu = input.evaluate(&up).1;
            let gd = input.evaluate(&dn).1;
            for r in 0..2 {
                assert_relative_eq!((gu[r] - gd[r]) / (2.0 * step), h[(r, c)], max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn always_exposed_is_collinear() {
        let d = Dataset::new(
            vec![
                subject("a", 1.0, true, 0.3, &[]),
                subject("b", 2.0, true, -0.2, &[]),
                subject("c", 3.0, false, 0.5, &[]),
            ],
            true,
        )
        .unwrap();
        let err = fit_with_exposure(&d, Method::Oc, |_, _| Ok(1.0)).unwrap_err();
        match err {
            Error::Collinear { columns } => assert_eq!(columns, vec!["exposure"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn no_events_is_an_error() {
        let d = Dataset::new(vec![subject("a", 1.0, false, 0.0, &[])], true).unwrap();
        assert!(matches!(fit_lvcf(&d), Err(Error::NoEvents)));
    }

    #[test]
    fn method_names() {
        for m in Method::ANALYSIS {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("cox".parse::<Method>().is_err());
    }
}
