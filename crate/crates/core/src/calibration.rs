//! Conditional exposure probabilities under a fitted change-time model,
//! and the risk-set family of refitted models.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, History};
use crate::error::{Error, Result};
use crate::icfit::{
    fit_npmle, fit_ph_spline, fit_weibull, select_knots, CalibrationModel, Criterion, Family,
    FitOptions, KnotCandidate, NpmleOptions,
};

/// `E[exp(beta X)]` for a Bernoulli(`p`) exposure.
pub fn mgf_expectation(beta: f64, p: f64) -> f64 {
    1.0 + p * beta.exp_m1()
}

/// `P(X(t) = 1 | history)`: 1 if exposure was already observed, otherwise
/// the probability that the change happens in `(w_bar, t]` given it had not
/// happened by `w_bar`.
pub fn prob_exposed(model: &CalibrationModel, history: &History<'_>) -> Result<f64> {
    if history.x_at_wbar {
        return Ok(1.0);
    }
    if history.t <= history.w_bar {
        return Ok(0.0);
    }
    let inconsistent = || Error::InconsistentModel {
        subject: String::new(),
        time: history.w_bar,
    };
    if let CalibrationModel::Npmle(f) = model {
        let sw = f.survival(history.w_bar);
        if sw <= 0.0 {
            return Err(inconsistent());
        }
        return Ok(((sw - f.survival(history.t)) / sw).clamp(0.0, 1.0));
    }
    let hw = model.baseline_cumhaz(history.w_bar);
    if hw.is_infinite() {
        return Err(inconsistent());
    }
    let ht = model.baseline_cumhaz(history.t);
    let increment = (ht - hw).max(0.0) * model.risk_multiplier(history.q);
    Ok((-(-increment).exp_m1()).clamp(0.0, 1.0))
}

/// How the first-stage model is chosen and fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationSettings {
    pub family: Family,
    pub degree: usize,
    /// Candidate interior-knot counts for the PH-spline family.
    pub knots: Vec<usize>,
    pub criterion: Criterion,
    pub options: FitOptions,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            family: Family::PhSpline,
            degree: 2,
            knots: vec![5],
            criterion: Criterion::Bic,
            options: FitOptions::default(),
        }
    }
}

/// A fitted first-stage model plus the knot-selection trace when one ran.
#[derive(Debug, Clone)]
pub struct CalibrationFit {
    pub model: CalibrationModel,
    pub knot_trace: Vec<KnotCandidate>,
    pub selected_knots: Option<usize>,
}

/// Fits the change-time model on every subject's censoring interval.
pub fn fit_calibration(dataset: &Dataset, settings: &CalibrationSettings) -> Result<CalibrationFit> {
    let intervals = dataset.intervals();
    match settings.family {
        Family::Npmle => Ok(CalibrationFit {
            model: CalibrationModel::Npmle(fit_npmle(&intervals, &NpmleOptions::default())?),
            knot_trace: Vec::new(),
            selected_knots: None,
        }),
        Family::Weibull => Ok(CalibrationFit {
            model: CalibrationModel::Weibull(fit_weibull(&intervals, &settings.options)?),
            knot_trace: Vec::new(),
            selected_knots: None,
        }),
        Family::PhSpline => {
            let sel = select_knots(
                &intervals,
                &dataset.q_rows(),
                &settings.knots,
                settings.degree,
                settings.criterion,
                &settings.options,
            )?;
            Ok(CalibrationFit {
                model: CalibrationModel::PhSpline(sel.fit),
                knot_trace: sel.trace,
                selected_knots: Some(sel.selected_m),
            })
        }
    }
}

/// Refits `template`'s family on `dataset`, reusing its spline basis and
/// warm-starting from its parameters.
pub fn refit_like(
    template: &CalibrationModel,
    dataset: &Dataset,
    options: &FitOptions,
) -> Result<CalibrationModel> {
    let intervals = dataset.intervals();
    Ok(match template {
        CalibrationModel::Npmle(_) => {
            CalibrationModel::Npmle(fit_npmle(&intervals, &NpmleOptions::default())?)
        }
        CalibrationModel::Weibull(_) => CalibrationModel::Weibull(fit_weibull(&intervals, options)?),
        CalibrationModel::PhSpline(f) => CalibrationModel::PhSpline(fit_ph_spline(
            &intervals,
            &dataset.q_rows(),
            &f.basis,
            options,
            Some((&f.psi, &f.alpha)),
        )?),
    })
}

/// Change-time models refitted on the risk sets `{T >= g}` of a grid
/// `g = 0, w, 2w, ...` covering the event times.
#[derive(Debug, Clone)]
pub struct RiskSetCalibration {
    pub grid_times: Vec<f64>,
    pub models: Vec<CalibrationModel>,
    /// Grid cells whose refit failed and reuse an earlier model.
    pub fallbacks: Vec<bool>,
}

impl RiskSetCalibration {
    /// The grid starts at 0 with `baseline` (fitted on everyone) and stops at
    /// the last event time.
    pub fn fit(
        dataset: &Dataset,
        baseline: &CalibrationModel,
        width: f64,
        options: &FitOptions,
    ) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::Config(format!("risk-set grid width must be positive, got {width}")));
        }
        let last_event = dataset
            .subjects()
            .iter()
            .filter(|s| s.event)
            .map(|s| s.obs_time)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut grid_times = vec![0.0];
        let mut models = vec![baseline.clone()];
        let mut fallbacks = vec![false];
        let mut k = 1usize;
        loop {
            let g = k as f64 * width;
            if g > last_event {
                break;
            }
            let previous = models.last().cloned().expect("baseline model present");
            let refit = dataset
                .risk_set(g)
                .and_then(|subset| refit_like(&previous, &subset, options));
            match refit {
                Ok(m) if m.converged() => {
                    models.push(m);
                    fallbacks.push(false);
                }
                Ok(_) => {
                    warn!("risk-set refit at t={g} did not converge; reusing the previous model");
                    models.push(previous);
                    fallbacks.push(true);
                }
                Err(e) => {
                    warn!("risk-set refit at t={g} failed ({e}); reusing the previous model");
                    models.push(previous);
                    fallbacks.push(true);
                }
            }
            grid_times.push(g);
            k += 1;
        }
        Ok(RiskSetCalibration {
            grid_times,
            models,
            fallbacks,
        })
    }

    /// Model attached to the largest grid time `<= t` (the first one below the grid).
    pub fn model_at(&self, t: f64) -> &CalibrationModel {
        let idx = self.grid_times.partition_point(|&g| g <= t);
        &self.models[idx.saturating_sub(1)]
    }

    pub fn cell_of(&self, t: f64) -> usize {
        self.grid_times.partition_point(|&g| g <= t).saturating_sub(1)
    }

    pub fn baseline(&self) -> &CalibrationModel {
        &self.models[0]
    }
}

pub fn rsc_prob_exposed(rsc: &RiskSetCalibration, event_time: f64, history: &History<'_>) -> Result<f64> {
    prob_exposed(rsc.model_at(event_time), history)
}

/// One point of a subject's estimated exposure-probability trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub id: String,
    pub t: f64,
    pub w_bar: f64,
    pub prob_exposed: f64,
}

/// `P(X(t) = 1 | history)` for every subject at each grid time up to its
/// follow-up time.
pub fn trajectories(
    model: &CalibrationModel,
    dataset: &Dataset,
    times: &[f64],
) -> Result<Vec<TrajectoryPoint>> {
    let mut out = Vec::new();
    for s in dataset.subjects() {
        for &t in times.iter().filter(|&&t| t <= s.obs_time) {
            let h = s.history_at(t);
            let p = prob_exposed(model, &h).map_err(|e| with_subject(e, &s.id))?;
            out.push(TrajectoryPoint {
                id: s.id.clone(),
                t,
                w_bar: h.w_bar,
                prob_exposed: p,
            });
        }
    }
    Ok(out)
}

/// Attaches a subject id to an inconsistent-model error.
pub(crate) fn with_subject(e: Error, id: &str) -> Error {
    match e {
        Error::InconsistentModel { time, .. } => Error::InconsistentModel {
            subject: id.to_string(),
            time,
        },
        other => other,
    }
}
