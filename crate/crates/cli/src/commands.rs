use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use calibsurv::calibration::{fit_calibration, trajectories, CalibrationSettings, RiskSetCalibration};
use calibsurv::estimators::{fit_lvcf, fit_midi, fit_oc, fit_rsc, FitReport, Method};
use calibsurv::icfit::{fit_npmle, fit_weibull, CalibrationModel, Family, KnotCandidate, NpmleOptions};
use calibsurv::io::{
    load_config, model_to_json, parse_model, parse_scenario, read_subjects_path, write_curves_csv,
    write_summary_csv, write_trajectories_csv, CurvePoint, StudyConfig,
};
use calibsurv::simulate::{run_study, Scenario, StudySettings, CHANGE_TIME_SURVIVAL};
use calibsurv::{Dataset, Error, Result};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::{CalibrationArgs, CurvesArgs, FitArgs, SimulateArgs};

impl CalibrationArgs {
    fn apply(&self, settings: &mut CalibrationSettings, rsc_width: &mut f64) {
        if let Some(f) = self.family {
            settings.family = f;
        }
        if let Some(k) = &self.knots {
            settings.knots = k.clone();
        }
        if let Some(d) = self.degree {
            settings.degree = d;
        }
        if let Some(c) = self.criterion {
            settings.criterion = c;
        }
        if let Some(w) = self.rsc_width {
            *rsc_width = w;
        }
    }
}

/// First-stage details recorded in the fit output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub family: Family,
    pub converged: bool,
    pub loglik: f64,
    pub selected_knots: Option<usize>,
    pub knot_trace: Vec<KnotCandidate>,
    /// Set when the model was read from a file instead of fitted.
    pub source: Option<String>,
    pub rsc_width: Option<f64>,
    pub rsc_fallbacks: Option<usize>,
}

/// Document written by `calibsurv fit`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOutput {
    pub input: String,
    pub seed: u64,
    pub level: f64,
    pub n_subjects: usize,
    pub n_events: usize,
    pub calibration: Option<CalibrationSummary>,
    pub fits: Vec<FitReport>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Config(format!("cannot create '{}': {e}", path.display())))
}

fn emit(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn load_study(config: &Path, input: Option<&Path>) -> Result<(StudyConfig, Dataset)> {
    let mut cfg = load_config(config)?;
    if let Some(i) = input {
        cfg.input = i.to_path_buf();
    }
    let data = read_subjects_path(&cfg.input, &cfg.columns, cfg.terminal)?;
    Ok((cfg, data))
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn fit(args: FitArgs) -> Result<()> {
    let (mut cfg, data) = load_study(&args.config, args.input.as_deref())?;
    args.calibration.apply(&mut cfg.calibration, &mut cfg.rsc.width);
    if !args.methods.is_empty() {
        cfg.methods = args.methods.iter().map(Method::to_string).collect();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let methods = cfg.method_list()?;

    let needs_model = methods.iter().any(|m| m.needs_calibration()) || cfg.trajectories.is_some();
    let mut summary = None;
    let mut model = None;
    if needs_model {
        let (m, s) = match &cfg.model_input {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read model '{}': {e}", path.display())))?;
                let m = parse_model(&text)?;
                if m.q_dim() != 0 && m.q_dim() != data.q_dim() {
                    return Err(Error::Config(format!(
                        "stored model uses {} calibration covariates, the configuration declares {}",
                        m.q_dim(),
                        data.q_dim()
                    )));
                }
                let s = CalibrationSummary {
                    family: m.family(),
                    converged: m.converged(),
                    loglik: m.loglik(),
                    selected_knots: None,
                    knot_trace: Vec::new(),
                    source: Some(file_label(path)),
                    rsc_width: None,
                    rsc_fallbacks: None,
                };
                (m, s)
            }
            None => {
                let fitted = fit_calibration(&data, &cfg.calibration)?;
                if !fitted.model.converged() {
                    warn!("the calibration model did not converge; estimates may be unreliable");
                }
                let s = CalibrationSummary {
                    family: fitted.model.family(),
                    converged: fitted.model.converged(),
                    loglik: fitted.model.loglik(),
                    selected_knots: fitted.selected_knots,
                    knot_trace: fitted.knot_trace,
                    source: None,
                    rsc_width: None,
                    rsc_fallbacks: None,
                };
                (fitted.model, s)
            }
        };
        if let Some(path) = &cfg.model_output {
            let mut w = create(path)?;
            w.write_all(model_to_json(&m)?.as_bytes())?;
            w.flush()?;
        }
        model = Some(m);
        summary = Some(s);
    }

    let mut fits = Vec::new();
    for &method in &methods {
        let fitted = match method {
            Method::Lvcf => fit_lvcf(&data)?,
            Method::Midi => fit_midi(&data)?,
            Method::Oc => fit_oc(&data, model.as_ref().expect("model fitted above"))?,
            Method::Rsc => {
                let base = model.as_ref().expect("model fitted above");
                let rsc = RiskSetCalibration::fit(&data, base, cfg.rsc.width, &cfg.calibration.options)?;
                if let Some(s) = summary.as_mut() {
                    s.rsc_width = Some(cfg.rsc.width);
                    s.rsc_fallbacks = Some(rsc.fallbacks.iter().filter(|&&f| f).count());
                }
                fit_rsc(&data, &rsc)?
            }
            Method::Known => calibsurv::estimators::fit_known(&data)?,
        };
        if !fitted.converged {
            warn!("{method}: the partial-likelihood fit did not converge");
        }
        fits.push(fitted.report(cfg.level));
    }

    if let (Some(t), Some(m)) = (&cfg.trajectories, &model) {
        let points = trajectories(m, &data, &t.times)?;
        let w = create(&t.output)?;
        write_trajectories_csv(&points, w)?;
    }

    let output = FitOutput {
        input: file_label(&cfg.input),
        seed: cfg.seed,
        level: cfg.level,
        n_subjects: data.len(),
        n_events: data.n_events(),
        calibration: summary,
        fits,
    };
    let json = serde_json::to_string_pretty(&output)?;
    let target = args.out.as_deref().or(cfg.output.as_deref());
    emit(target, |w| {
        writeln!(w, "{json}")?;
        Ok(())
    })
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let mut scenario = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read scenario '{}': {e}", path.display())))?;
            parse_scenario(&text)?
        }
        None => Scenario::default(),
    };
    if let Some(s) = args.seed {
        scenario.seed = s;
    }
    let mut settings = StudySettings {
        workers: args.workers,
        ..StudySettings::default()
    };
    args.calibration.apply(&mut settings.calibration, &mut settings.rsc_width);
    let methods = if args.methods.is_empty() {
        vec![Method::Lvcf, Method::Oc, Method::Rsc]
    } else {
        args.methods.clone()
    };
    eprintln!("seed: {}", scenario.seed);
    eprintln!(
        "change-time model: {CHANGE_TIME_SURVIVAL}, time scale {}",
        scenario.change_time_scale
    );
    let summary = run_study(&scenario, &methods, args.reps, &settings)?;
    eprintln!("mean censoring rate: {:.4}", summary.mean_censoring_rate);
    emit(args.out.as_deref(), |w| write_summary_csv(&summary, w))
}

fn stratum_rows(data: &Dataset, column: Option<&str>) -> Result<Vec<(String, Vec<usize>)>> {
    let Some(name) = column else {
        return Ok(vec![("all".to_string(), (0..data.len()).collect())]);
    };
    let j = data
        .q_names()
        .iter()
        .position(|q| q == name)
        .ok_or_else(|| Error::Config(format!("stratification column '{name}' is not a q column")))?;
    let mut groups = [Vec::new(), Vec::new()];
    for (i, s) in data.subjects().iter().enumerate() {
        match s.q[j] {
            v if v == 0.0 => groups[0].push(i),
            v if v == 1.0 => groups[1].push(i),
            v => {
                return Err(Error::Config(format!(
                    "stratification column '{name}' must be 0/1, subject {} has {v}",
                    s.id
                )))
            }
        }
    }
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(k, rows)| (format!("{name}={k}"), rows))
        .collect())
}

/// `(time, survival)` vertices: the nonparametric curve as a step function
/// with drops at the right ends of its support, parametric curves on a grid.
fn curve(model: &CalibrationModel, grid_end: f64, points: usize) -> Vec<(f64, f64)> {
    match model {
        CalibrationModel::Npmle(f) => std::iter::once((0.0, 1.0))
            .chain(
                f.support
                    .iter()
                    .filter(|s| s.right.is_finite())
                    .map(|s| (s.right, f.survival(s.right))),
            )
            .collect(),
        other => {
            let n = points.max(2);
            (0..n)
                .map(|k| {
                    let v = grid_end * k as f64 / (n - 1) as f64;
                    (v, (-other.baseline_cumhaz(v)).exp())
                })
                .collect()
        }
    }
}

pub fn curves(args: CurvesArgs) -> Result<()> {
    let (cfg, data) = load_study(&args.config, args.input.as_deref())?;
    let families = match args.family {
        Some(f) => vec![f],
        None => cfg.curves.families.clone(),
    };
    if let Some(f) = families.iter().find(|f| **f == Family::PhSpline) {
        return Err(Error::Config(format!("curves support npmle and weibull, not {f}")));
    }
    let mut out: Vec<CurvePoint> = Vec::new();
    for (label, rows) in stratum_rows(&data, cfg.curves.stratify.as_deref())? {
        if rows.is_empty() {
            warn!("stratum {label} is empty; skipped");
            continue;
        }
        let intervals: Vec<_> = rows.iter().map(|&i| data.subjects()[i].interval()).collect();
        let grid_end = intervals
            .iter()
            .flat_map(|iv| [iv.left, iv.right])
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max);
        let grid_end = if grid_end > 0.0 { grid_end } else { data.max_obs_time() };
        for &family in &families {
            let model = match family {
                Family::Npmle => CalibrationModel::Npmle(fit_npmle(&intervals, &NpmleOptions::default())?),
                _ => CalibrationModel::Weibull(fit_weibull(&intervals, &cfg.calibration.options)?),
            };
            out.extend(curve(&model, grid_end, cfg.curves.points).into_iter().map(|(time, survival)| {
                CurvePoint {
                    stratum: label.clone(),
                    family,
                    time,
                    survival,
                }
            }));
        }
    }
    let target = args.out.as_deref().or(cfg.curves.output.as_deref());
    emit(target, |w| write_curves_csv(&out, w))
}
