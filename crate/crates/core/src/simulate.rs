//! Data-generating process for the Monte-Carlo study and the study harness.
//!
//! Per subject: `Q1 ~ Bernoulli(0.5)`, `Q2 ~ N(0, 0.5^2)`, `Z3 ~ N(0, 1)`;
//! main-model covariates `Z = (Q1, Q2, Z3)`, calibration covariates
//! `Q = (Q1, Q2)`. The change-time has
//! `S(v | q) = exp(-(log(1 + v) + sqrt(v)) exp(eta' q))` (optionally
//! stretched by `change_time_scale`), the event time a
//! Gompertz baseline hazard `a e^{bt}` multiplied by
//! `exp(gamma' z + beta 1{t >= V})`, and censoring is `min(Exp(mean), admin)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Exp, Exp1, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{fit_calibration, CalibrationSettings, RiskSetCalibration};
use crate::data::{Dataset, Subject};
use crate::error::{Error, Result};
use crate::estimators::{fit_known, fit_lvcf, fit_midi, fit_oc, fit_rsc, MainFit, Method};
use crate::inference::confidence_interval;

/// Survival function of the change-time used by the generator.
pub const CHANGE_TIME_SURVIVAL: &str = "S(v|q) = exp(-(log(1+v) + sqrt(v)) * exp(eta'q))";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub n: usize,
    pub beta0: f64,
    pub gamma0: Vec<f64>,
    pub gompertz_a: f64,
    pub gompertz_b: f64,
    pub eta0: Vec<f64>,
    pub censor_mean: f64,
    pub admin_censor: f64,
    pub m_star: usize,
    pub horizon: f64,
    pub terminal: bool,
    pub seed: u64,
    /// Multiplies every drawn change-time; 1 keeps the stated survival
    /// function, larger values delay exposure.
    pub change_time_scale: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            n: 1000,
            beta0: 0.0,
            gamma0: vec![0.75f64.ln(), 2.5f64.ln(), 1.5f64.ln()],
            gompertz_a: 0.1,
            gompertz_b: 0.25,
            eta0: vec![2f64.ln(), 0.5f64.ln()],
            censor_mean: 5.0,
            admin_censor: 5.0,
            m_star: 2,
            horizon: 5.0,
            terminal: true,
            seed: 20_240_601,
            change_time_scale: 1.0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("invalid scenario: {msg}")));
        if self.n < 2 {
            return bad("n must be at least 2");
        }
        if self.gamma0.len() != 3 {
            return bad("gamma0 must have 3 entries (q1, q2, z3)");
        }
        if self.eta0.len() != 2 {
            return bad("eta0 must have 2 entries (q1, q2)");
        }
        let scales = [
            self.gompertz_a,
            self.gompertz_b,
            self.censor_mean,
            self.admin_censor,
            self.horizon,
            self.change_time_scale,
        ];
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("gompertz_a, gompertz_b, censor_mean, admin_censor, horizon and change_time_scale must be positive");
        }
        if !self.beta0.is_finite() || self.gamma0.iter().chain(&self.eta0).any(|v| !v.is_finite()) {
            return bad("coefficients must be finite");
        }
        Ok(())
    }

    fn gompertz_cumhaz(&self, t: f64) -> f64 {
        self.gompertz_a / self.gompertz_b * (self.gompertz_b * t).exp_m1()
    }

    fn gompertz_inverse(&self, y: f64) -> f64 {
        (self.gompertz_b * y / self.gompertz_a).ln_1p() / self.gompertz_b
    }

    /// Closed-form survival of the event time for a subject with known `v`.
    pub fn event_survival(&self, t: f64, v: f64, z: &[f64]) -> f64 {
        let c = linear(&self.gamma0, z).exp();
        let h = if t < v {
            self.gompertz_cumhaz(t)
        } else {
            let hv = self.gompertz_cumhaz(v);
            hv + self.beta0.exp() * (self.gompertz_cumhaz(t) - hv)
        };
        (-c * h).exp()
    }
}

fn linear(coef: &[f64], x: &[f64]) -> f64 {
    coef.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// `(q1, q2, z3)`.
pub fn draw_covariates<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64, f64) {
    let q1 = if Bernoulli::new(0.5).expect("valid p").sample(rng) { 1.0 } else { 0.0 };
    let q2 = Normal::new(0.0, 0.5).expect("valid sd").sample(rng);
    let z3: f64 = rng.sample(rand_distr::StandardNormal);
    (q1, q2, z3)
}

/// Solves `log(1 + v) + sqrt(v) = y` for `v >= 0`.
pub fn change_time_inverse(y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    // In s = sqrt(v), g(s) = ln(1 + s^2) + s is increasing with g' >= 1 and
    // g(y) >= y, so the root lies in [0, y].
    let g = |s: f64| (s * s).ln_1p() + s;
    let (mut lo, mut hi) = (0.0, y);
    let mut s = y.min(1.0);
    for _ in 0..200 {
        let f = g(s) - y;
        if f > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let deriv = 2.0 * s / (1.0 + s * s) + 1.0;
        let mut next = s - f / deriv;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= 1e-14 * (1.0 + s) || hi - lo <= 1e-15 * (1.0 + hi) {
            s = next;
            break;
        }
        s = next;
    }
    s * s
}

pub fn draw_change_time<R: Rng + ?Sized>(q: &[f64], eta: &[f64], rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    change_time_inverse(e / linear(eta, q).exp())
}

/// Inversion of the piecewise cumulative hazard; `v = inf` means never exposed.
pub fn draw_event_time<R: Rng + ?Sized>(v: f64, z: &[f64], scenario: &Scenario, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    let target = e / linear(&scenario.gamma0, z).exp();
    let hv = if v.is_finite() {
        scenario.gompertz_cumhaz(v)
    } else {
        f64::INFINITY
    };
    if target < hv {
        scenario.gompertz_inverse(target)
    } else {
        scenario.gompertz_inverse(hv + (target - hv) / scenario.beta0.exp())
    }
}

/// One time in each of `m_star` equal slices of `[0, horizon]`; with a
/// terminal event only times before `t_tilde` are kept.
pub fn draw_questionnaires<R: Rng + ?Sized>(
    m_star: usize,
    horizon: f64,
    t_tilde: f64,
    terminal: bool,
    rng: &mut R,
) -> Vec<f64> {
    let width = horizon / m_star.max(1) as f64;
    (0..m_star)
        .map(|j| {
            let lo = j as f64 * width;
            Uniform::new(lo, lo + width).expect("nonempty slice").sample(rng)
        })
        .filter(|&w| !terminal || w < t_tilde)
        .collect()
}

pub fn gen_dataset<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Result<Dataset> {
    scenario.validate()?;
    let censor = Exp::new(1.0 / scenario.censor_mean).expect("positive rate");
    let subjects = (0..scenario.n)
        .map(|i| {
            let (q1, q2, z3) = draw_covariates(rng);
            let q = vec![q1, q2];
            let z = vec![q1, q2, z3];
            let v = scenario.change_time_scale * draw_change_time(&q, &scenario.eta0, rng);
            let t = draw_event_time(v, &z, scenario, rng);
            let c = censor.sample(rng).min(scenario.admin_censor);
            let obs = t.min(c);
            let times = draw_questionnaires(scenario.m_star, scenario.horizon, obs, scenario.terminal, rng);
            let status = times.iter().map(|&w| w >= v).collect();
            Subject::new(format!("s{}", i + 1), obs, t < c, z, q, times, status, scenario.terminal)
                .map(|s| s.with_true_change(v))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(subjects, scenario.terminal)?.with_names(
        vec!["q1".into(), "q2".into(), "z3".into()],
        vec!["q1".into(), "q2".into()],
    )
}

/// Generator for replication `rep`: the master seed with its own stream,
/// so each replication is reproducible on its own.
pub fn replicate_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudySettings {
    pub calibration: CalibrationSettings,
    pub rsc_width: f64,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    pub level: f64,
}

impl Default for StudySettings {
    fn default() -> Self {
        StudySettings {
            calibration: CalibrationSettings::default(),
            rsc_width: 0.5,
            workers: 0,
            level: 0.95,
        }
    }
}

/// One method's result on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateEstimate {
    pub rep: u64,
    pub method: Method,
    pub beta: Option<f64>,
    pub se: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean: f64,
    /// Empirical standard deviation; absent with fewer than two replications.
    pub emp_se: Option<f64>,
    pub mean_se: f64,
    pub cp95: f64,
    pub replications: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub scenario: Scenario,
    pub methods: Vec<MethodSummary>,
    pub mean_censoring_rate: f64,
    pub replicates: Vec<ReplicateEstimate>,
}

fn fit_method(
    method: Method,
    data: &Dataset,
    calib: &Option<std::result::Result<crate::icfit::CalibrationModel, String>>,
    settings: &StudySettings,
) -> std::result::Result<MainFit, String> {
    let model = || match calib {
        Some(Ok(m)) => Ok(m),
        Some(Err(e)) => Err(format!("calibration fit failed: {e}")),
        None => Err("calibration model missing".to_string()),
    };
    let fit = match method {
        Method::Lvcf => fit_lvcf(data),
        Method::Midi => fit_midi(data),
        Method::Known => fit_known(data),
        Method::Oc => fit_oc(data, model()?),
        Method::Rsc => {
            let base = model()?;
            RiskSetCalibration::fit(data, base, settings.rsc_width, &settings.calibration.options)
                .and_then(|rsc| fit_rsc(data, &rsc))
        }
    }
    .map_err(|e| e.to_string())?;
    if !fit.converged {
        return Err("main-model fit did not converge".into());
    }
    if !(fit.se_beta.is_finite() && fit.se_beta > 0.0) {
        return Err(format!("invalid standard error {}", fit.se_beta));
    }
    Ok(fit)
}

/// Generates one dataset and fits every requested method.
pub fn run_replicate(
    scenario: &Scenario,
    methods: &[Method],
    settings: &StudySettings,
    rep: u64,
) -> (f64, Vec<ReplicateEstimate>) {
    let mut rng = replicate_rng(scenario.seed, rep);
    let data = match gen_dataset(scenario, &mut rng) {
        Ok(d) => d,
        Err(e) => {
            let err = e.to_string();
            return (
                f64::NAN,
                methods
                    .iter()
                    .map(|&method| ReplicateEstimate {
                        rep,
                        method,
                        beta: None,
                        se: None,
                        error: Some(err.clone()),
                    })
                    .collect(),
            );
        }
    };
    let calib = methods.iter().any(|m| m.needs_calibration()).then(|| {
        fit_calibration(&data, &settings.calibration)
            .map_err(|e| e.to_string())
            .and_then(|f| {
                if f.model.converged() {
                    Ok(f.model)
                } else {
                    Err("calibration model did not converge".to_string())
                }
            })
    });
    let estimates = methods
        .iter()
        .map(|&method| match fit_method(method, &data, &calib, settings) {
            Ok(fit) => ReplicateEstimate {
                rep,
                method,
                beta: Some(fit.beta),
                se: Some(fit.se_beta),
                error: None,
            },
            Err(error) => ReplicateEstimate {
                rep,
                method,
                beta: None,
                se: None,
                error: Some(error),
            },
        })
        .collect();
    (data.censoring_rate(), estimates)
}

/// Aggregates replications into Mean, EMP.SE, mean SE and CP95 per method.
pub fn summarize(beta0: f64, level: f64, methods: &[Method], replicates: &[ReplicateEstimate]) -> Vec<MethodSummary> {
    methods
        .iter()
        .map(|&method| {
            let rows: Vec<&ReplicateEstimate> = replicates.iter().filter(|r| r.method == method).collect();
            let ok: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r.beta?, r.se?))).collect();
            let k = ok.len() as f64;
            let mean = ok.iter().map(|e| e.0).sum::<f64>() / k;
            let emp_se = (ok.len() >= 2)
                .then(|| (ok.iter().map(|e| (e.0 - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt());
            let mean_se = ok.iter().map(|e| e.1).sum::<f64>() / k;
            let covered = ok
                .iter()
                .filter(|(b, se)| {
                    let (lo, hi) = confidence_interval(*b, *se, level);
                    lo <= beta0 && beta0 <= hi
                })
                .count();
            MethodSummary {
                method,
                mean,
                emp_se,
                mean_se,
                cp95: covered as f64 / k,
                replications: ok.len(),
                failures: rows.len() - ok.len(),
            }
        })
        .collect()
}

/// Runs `n_reps` replications (concurrently when `settings.workers != 1`).
/// Failed fits are counted, never fatal.
pub fn run_study(
    scenario: &Scenario,
    methods: &[Method],
    n_reps: usize,
    settings: &StudySettings,
) -> Result<StudySummary> {
    scenario.validate()?;
    if n_reps == 0 {
        return Err(Error::Config("at least one replication is required".into()));
    }
    if methods.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    let job = || -> Vec<(f64, Vec<ReplicateEstimate>)> {
        (0..n_reps as u64)
            .into_par_iter()
            .map(|rep| run_replicate(scenario, methods, settings, rep))
            .collect()
    };
    let results = if settings.workers == 0 {
        job()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(settings.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
            .install(job)
    };
    let rates: Vec<f64> = results.iter().map(|r| r.0).filter(|r| r.is_finite()).collect();
    let replicates: Vec<ReplicateEstimate> = results.into_iter().flat_map(|r| r.1).collect();
    Ok(StudySummary {
        scenario: scenario.clone(),
        methods: summarize(scenario.beta0, settings.level, methods, &replicates),
        mean_censoring_rate: rates.iter().sum::<f64>() / rates.len().max(1) as f64,
        replicates,
    })
}
