//! Subjects, censoring intervals for the change-time, and the observed
//! covariate history at a given time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One study participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    /// Observed follow-up time, `min(T, C)`.
    pub obs_time: f64,
    pub event: bool,
    /// Main-model covariates.
    pub z: Vec<f64>,
    /// Calibration-model covariates.
    pub q: Vec<f64>,
    pub quest_times: Vec<f64>,
    pub quest_status: Vec<bool>,
    /// True change-time, known only for simulated data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_change: Option<f64>,
}

/// The interval `(left, right]` into which the change-time is censored.
/// `right` is `+inf` when no positive status was observed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoringInterval {
    pub left: f64,
    #[serde(with = "crate::io::serde_inf")]
    pub right: f64,
}

impl CensoringInterval {
    pub fn new(left: f64, right: f64) -> Result<Self> {
        if !(left >= 0.0 && left.is_finite()) || !(right > left) {
            return Err(Error::InvalidInput(format!(
                "censoring interval ({left}, {right}] must satisfy 0 <= left < right"
            )));
        }
        Ok(CensoringInterval { left, right })
    }

    pub fn is_right_censored(&self) -> bool {
        self.right.is_infinite()
    }

    pub fn is_left_censored(&self) -> bool {
        self.left == 0.0 && self.right.is_finite()
    }

    /// Neither endpoint carries information, i.e. `(0, inf]`.
    pub fn is_uninformative(&self) -> bool {
        self.left == 0.0 && self.right.is_infinite()
    }

    pub fn contains(&self, v: f64) -> bool {
        v > self.left && v <= self.right
    }

    /// Midpoint of a finite interval; `None` when right-censored.
    pub fn midpoint(&self) -> Option<f64> {
        self.right
            .is_finite()
            .then(|| 0.5 * (self.left + self.right))
    }
}

/// The observed history of a subject at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct History<'a> {
    pub t: f64,
    /// Last measurement time at or before `t`, or 0.
    pub w_bar: f64,
    pub x_at_wbar: bool,
    pub q: &'a [f64],
}

/// Turns a questionnaire sequence into the censoring interval of the
/// change-time.
pub fn build_interval(quest_times: &[f64], quest_status: &[bool]) -> Result<CensoringInterval> {
    check_questionnaires("<anonymous>", quest_times, quest_status)?;
    Ok(interval_unchecked(quest_times, quest_status))
}

fn interval_unchecked(quest_times: &[f64], quest_status: &[bool]) -> CensoringInterval {
    let first_pos = quest_status.iter().position(|&x| x);
    let left = match first_pos {
        Some(0) => 0.0,
        Some(j) => quest_times[j - 1],
        None => quest_times.last().copied().unwrap_or(0.0),
    };
    let right = first_pos.map_or(f64::INFINITY, |j| quest_times[j]);
    CensoringInterval { left, right }
}

fn check_questionnaires(id: &str, times: &[f64], status: &[bool]) -> Result<()> {
    if times.len() != status.len() {
        return Err(Error::invalid_subject(
            id,
            format!(
                "{} questionnaire times but {} statuses",
                times.len(),
                status.len()
            ),
        ));
    }
    for (j, &w) in times.iter().enumerate() {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::invalid_subject(
                id,
                format!("questionnaire time {w} is not a finite nonnegative number"),
            ));
        }
        if j > 0 && w <= times[j - 1] {
            return Err(Error::invalid_subject(
                id,
                "questionnaire times must be strictly increasing",
            ));
        }
    }
    if status.windows(2).any(|s| s[0] && !s[1]) {
        return Err(Error::invalid_subject(
            id,
            "exposure status reverts from 1 to 0",
        ));
    }
    if let (Some(&w0), Some(&true)) = (times.first(), status.first()) {
        if w0 == 0.0 {
            return Err(Error::invalid_subject(
                id,
                "exposure reported at time 0, but the covariate is 0 at baseline",
            ));
        }
    }
    Ok(())
}

impl Subject {
    /// Validates and builds a subject. Questionnaires after `obs_time` are
    /// rejected only when `terminal` is set.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        obs_time: f64,
        event: bool,
        z: Vec<f64>,
        q: Vec<f64>,
        quest_times: Vec<f64>,
        quest_status: Vec<bool>,
        terminal: bool,
    ) -> Result<Self> {
        let subject = Subject {
            id: id.into(),
            obs_time,
            event,
            z,
            q,
            quest_times,
            quest_status,
            true_change: None,
        };
        subject.validate(terminal)?;
        Ok(subject)
    }

    pub fn with_true_change(mut self, v: f64) -> Self {
        self.true_change = Some(v);
        self
    }

    pub fn validate(&self, terminal: bool) -> Result<()> {
        if !(self.obs_time >= 0.0 && self.obs_time.is_finite()) {
            return Err(Error::invalid_subject(
                &self.id,
                format!("observed time {} is not finite and nonnegative", self.obs_time),
            ));
        }
        if self.z.iter().chain(&self.q).any(|v| !v.is_finite()) {
            return Err(Error::invalid_subject(&self.id, "non-finite covariate"));
        }
        check_questionnaires(&self.id, &self.quest_times, &self.quest_status)?;
        if terminal {
            if let Some(&w) = self.quest_times.last() {
                if w > self.obs_time {
                    return Err(Error::invalid_subject(
                        &self.id,
                        format!(
                            "questionnaire at {w} after observed time {} with a terminal event",
                            self.obs_time
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn n_questionnaires(&self) -> usize {
        self.quest_times.len()
    }

    pub fn interval(&self) -> CensoringInterval {
        interval_unchecked(&self.quest_times, &self.quest_status)
    }

    /// History at `t`; a questionnaire at exactly `t` is included.
    pub fn history_at(&self, t: f64) -> History<'_> {
        let idx = self.quest_times.partition_point(|&w| w <= t);
        let (w_bar, x_at_wbar) = if idx == 0 {
            (0.0, false)
        } else {
            (self.quest_times[idx - 1], self.quest_status[idx - 1])
        };
        History {
            t,
            w_bar,
            x_at_wbar,
            q: &self.q,
        }
    }

    /// Last-value-carried-forward exposure at `t`.
    pub fn lvcf_exposure(&self, t: f64) -> bool {
        self.history_at(t).x_at_wbar
    }

    /// Change-time placed at the centre of the censoring interval, `None`
    /// when the interval is right-censored.
    pub fn midpoint_impute(&self) -> Option<f64> {
        self.interval().midpoint()
    }

    /// `X(t) = 1{t >= V}` for simulated subjects.
    pub fn true_exposure(&self, t: f64) -> Option<bool> {
        self.true_change.map(|v| t >= v)
    }
}

/// A validated collection of subjects with common covariate dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    subjects: Vec<Subject>,
    z_dim: usize,
    q_dim: usize,
    terminal: bool,
    #[serde(default)]
    z_names: Vec<String>,
    #[serde(default)]
    q_names: Vec<String>,
}

impl Dataset {
    pub fn new(subjects: Vec<Subject>, terminal: bool) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::InvalidInput("dataset has no subjects".into()));
        }
        let z_dim = subjects[0].z.len();
        let q_dim = subjects[0].q.len();
        for s in &subjects {
            s.validate(terminal)?;
            if s.z.len() != z_dim || s.q.len() != q_dim {
                return Err(Error::invalid_subject(
                    &s.id,
                    format!(
                        "covariate dimensions ({}, {}) differ from ({z_dim}, {q_dim})",
                        s.z.len(),
                        s.q.len()
                    ),
                ));
            }
        }
        Ok(Dataset {
            subjects,
            z_dim,
            q_dim,
            terminal,
            z_names: (1..=z_dim).map(|j| format!("z{j}")).collect(),
            q_names: (1..=q_dim).map(|j| format!("q{j}")).collect(),
        })
    }

    pub fn with_names(mut self, z_names: Vec<String>, q_names: Vec<String>) -> Result<Self> {
        if z_names.len() != self.z_dim || q_names.len() != self.q_dim {
            return Err(Error::InvalidInput(
                "column names do not match covariate dimensions".into(),
            ));
        }
        self.z_names = z_names;
        self.q_names = q_names;
        Ok(self)
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    pub fn q_dim(&self) -> usize {
        self.q_dim
    }

    pub fn z_names(&self) -> &[String] {
        &self.z_names
    }

    pub fn q_names(&self) -> &[String] {
        &self.q_names
    }

    pub fn terminal(&self) -> bool {
        self.terminal
    }

    pub fn n_events(&self) -> usize {
        self.subjects.iter().filter(|s| s.event).count()
    }

    pub fn intervals(&self) -> Vec<CensoringInterval> {
        self.subjects.iter().map(Subject::interval).collect()
    }

    pub fn q_rows(&self) -> Vec<Vec<f64>> {
        self.subjects.iter().map(|s| s.q.clone()).collect()
    }

    pub fn max_obs_time(&self) -> f64 {
        self.subjects
            .iter()
            .map(|s| s.obs_time)
            .fold(0.0, f64::max)
    }

    /// Subjects still at risk at `t` (`obs_time >= t`).
    pub fn risk_set(&self, t: f64) -> Result<Dataset> {
        let subjects: Vec<Subject> = self
            .subjects
            .iter()
            .filter(|s| s.obs_time >= t)
            .cloned()
            .collect();
        let mut d = Dataset::new(subjects, self.terminal)?;
        d.z_names = self.z_names.clone();
        d.q_names = self.q_names.clone();
        Ok(d)
    }

    /// Fraction of subjects without an observed event.
    pub fn censoring_rate(&self) -> f64 {
        1.0 - self.n_events() as f64 / self.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn subject(times: &[f64], status: &[bool]) -> Subject {
        Subject::new(
            "s",
            10.0,
            true,
            vec![],
            vec![],
            times.to_vec(),
            status.to_vec(),
            true,
        )
        .unwrap()
    }

    #[test]
    fn interval_cases() {
        let i = build_interval(&[], &[]).unwrap();
        assert_eq!(i.left, 0.0);
        assert!(i.right.is_infinite());

        let i = build_interval(&[1.0, 2.5], &[false, true]).unwrap();
        assert_eq!((i.left, i.right), (1.0, 2.5));

        let i = build_interval(&[1.0, 3.0], &[false, false]).unwrap();
        assert_eq!(i.left, 3.0);
        assert!(i.is_right_censored());

        let i = build_interval(&[1.0, 3.0], &[true, true]).unwrap();
        assert_eq!((i.left, i.right), (0.0, 1.0));
        assert!(i.is_left_censored());
    }

    #[test]
    fn reverting_status_is_rejected() {
        let err = build_interval(&[1.0, 2.0], &[true, false]).unwrap_err();
        assert!(matches!(err, Error::InvalidSubject { .. }));
        assert!(build_interval(&[2.0, 1.0], &[false, false]).is_err());
        assert!(build_interval(&[1.0], &[false, true]).is_err());
    }

    #[test]
    fn terminal_flag_controls_late_questionnaires() {
        let late = |terminal| {
            Subject::new("a", 1.0, true, vec![], vec![], vec![2.0], vec![true], terminal)
        };
        assert!(late(true).is_err());
        assert!(late(false).is_ok());
    }

    #[test]
    fn history_examples() {
        let s = subject(&[1.0, 2.5], &[false, true]);
        let h = s.history_at(2.0);
        assert_eq!((h.w_bar, h.x_at_wbar), (1.0, false));
        let h = s.history_at(2.5);
        assert_eq!((h.w_bar, h.x_at_wbar), (2.5, true));
        let h = s.history_at(0.5);
        assert_eq!((h.w_bar, h.x_at_wbar), (0.0, false));

        let empty = subject(&[], &[]);
        let h = empty.history_at(4.0);
        assert_eq!((h.w_bar, h.x_at_wbar), (0.0, false));
    }

    #[test]
    fn midpoint_examples() {
        assert_eq!(subject(&[1.0, 2.5], &[false, true]).midpoint_impute(), Some(1.75));
        assert_eq!(subject(&[1.0, 3.0], &[false, false]).midpoint_impute(), None);
        assert_eq!(subject(&[2.0], &[true]).midpoint_impute(), Some(1.0));
    }

    #[test]
    fn lvcf_switches_at_first_positive() {
        let s = subject(&[0.7, 1.4], &[true, true]);
        assert!(!s.lvcf_exposure(0.69));
        assert!(s.lvcf_exposure(0.7));
        assert!(s.lvcf_exposure(9.0));
    }

    fn questionnaires() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (prop::collection::vec(0.01f64..1.0, 0..8), 0usize..9).prop_map(|(gaps, switch)| {
            let mut t = 0.0;
            let times: Vec<f64> = gaps
                .iter()
                .map(|g| {
                    t += g;
                    t
                })
                .collect();
            let status = (0..times.len()).map(|j| j >= switch).collect();
            (times, status)
        })
    }

    proptest! {
        #[test]
        fn measurements_outside_interval_add_nothing((times, status) in questionnaires()) {
            let full = build_interval(&times, &status).unwrap();
            let keep: Vec<usize> = (0..times.len()).filter(|&j| times[j] <= full.right).collect();
            let t: Vec<f64> = keep.iter().map(|&j| times[j]).collect();
            let s: Vec<bool> = keep.iter().map(|&j| status[j]).collect();
            prop_assert_eq!(build_interval(&t, &s).unwrap(), full);
        }

        #[test]
        fn midpoint_strictly_inside((times, status) in questionnaires()) {
            let i = build_interval(&times, &status).unwrap();
            if let Some(m) = i.midpoint() {
                prop_assert!(m > i.left && m < i.right);
            }
        }

        #[test]
        fn history_piecewise_constant((times, status) in questionnaires(), t in 0.0f64..9.0) {
            let s = subject(&times, &status);
            let h = s.history_at(t);
            prop_assert!(h.w_bar <= t);
            // Moving t forward without crossing a questionnaire leaves the history unchanged.
            let next = times.iter().copied().find(|&w| w > t).unwrap_or(f64::INFINITY);
            let t2 = if next.is_finite() { 0.5 * (t + next) } else { t + 1.0 };
            let h2 = s.history_at(t2);
            prop_assert_eq!((h.w_bar, h.x_at_wbar), (h2.w_bar, h2.x_at_wbar));
        }
    }
}
