//! File formats: the wide subject CSV, the TOML study configuration,
//! scenario and calibration-model JSON, and the CSV reports.
//!
//! Subject CSV: one row per subject with id, follow-up time, event (0/1),
//! main-model and calibration covariates, then `(time, status)` pairs for
//! up to the declared number of questionnaires. A pair left blank means the
//! subject answered fewer questionnaires.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationSettings, TrajectoryPoint};
use crate::data::{Dataset, Subject};
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::icfit::{CalibrationModel, Family};
use crate::simulate::{Scenario, StudySummary};

/// Serializes infinite interval endpoints as `null`.
pub mod serde_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Which CSV column plays which role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRoles {
    pub id: String,
    pub time: String,
    pub event: String,
    #[serde(default)]
    pub z: Vec<String>,
    #[serde(default)]
    pub q: Vec<String>,
    /// `(time column, status column)` per questionnaire slot.
    #[serde(default)]
    pub questionnaires: Vec<(String, String)>,
}

impl ColumnRoles {
    /// The layout written by [`write_subjects_csv`].
    pub fn standard(z: &[String], q: &[String], max_questionnaires: usize) -> Self {
        ColumnRoles {
            id: "id".into(),
            time: "time".into(),
            event: "event".into(),
            z: z.to_vec(),
            q: q.to_vec(),
            questionnaires: (1..=max_questionnaires)
                .map(|j| (format!("w{j}"), format!("x{j}")))
                .collect(),
        }
    }

    fn all(&self) -> impl Iterator<Item = (&str, &str)> {
        [("id", &self.id), ("time", &self.time), ("event", &self.event)]
            .into_iter()
            .map(|(r, c)| (r, c.as_str()))
            .chain(self.z.iter().map(|c| ("z", c.as_str())))
            .chain(self.q.iter().map(|c| ("q", c.as_str())))
            .chain(
                self.questionnaires
                    .iter()
                    .flat_map(|(w, x)| [("questionnaire time", w.as_str()), ("questionnaire status", x.as_str())]),
            )
    }
}

fn parse_real(cell: &str, column: &str) -> std::result::Result<f64, String> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("column '{column}': expected a finite number, found '{cell}'")),
    }
}

fn parse_flag(cell: &str, column: &str) -> std::result::Result<bool, String> {
    match cell {
        "0" | "false" | "FALSE" | "False" => Ok(false),
        "1" | "true" | "TRUE" | "True" => Ok(true),
        _ => Err(format!("column '{column}': expected 0 or 1, found '{cell}'")),
    }
}

/// Reads the wide subject CSV. Rows are numbered by file line, so the
/// header is line 1 and the first subject line 2.
pub fn read_subjects_csv<R: Read>(reader: R, roles: &ColumnRoles, terminal: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Csv {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let index = |column: &str, role: &str| -> Result<usize> {
        header.iter().position(|h| h == column).ok_or_else(|| {
            Error::Config(format!("{role} column '{column}' not found in the input header"))
        })
    };
    for (role, column) in roles.all() {
        index(column, role)?;
    }
    let id_col = index(&roles.id, "id")?;
    let time_col = index(&roles.time, "time")?;
    let event_col = index(&roles.event, "event")?;
    let z_cols: Vec<usize> = roles.z.iter().map(|c| index(c, "z")).collect::<Result<_>>()?;
    let q_cols: Vec<usize> = roles.q.iter().map(|c| index(c, "q")).collect::<Result<_>>()?;
    let pair_cols: Vec<(usize, usize)> = roles
        .questionnaires
        .iter()
        .map(|(w, x)| Ok((index(w, "questionnaire time")?, index(x, "questionnaire status")?)))
        .collect::<Result<_>>()?;

    let mut subjects = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let fallback_row = k + 2;
        let record = record.map_err(|e| Error::Csv {
            row: e.position().map_or(fallback_row, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let row = record.position().map_or(fallback_row, |p| p.line() as usize);
        let csv_err = |message: String| Error::Csv { row, message };
        let cell = |c: usize| record.get(c).unwrap_or("");

        let id = cell(id_col);
        if id.is_empty() {
            return Err(csv_err("empty subject id".into()));
        }
        let obs_time = parse_real(cell(time_col), &roles.time).map_err(csv_err)?;
        let event = parse_flag(cell(event_col), &roles.event).map_err(csv_err)?;
        let reals = |cols: &[usize], names: &[String]| -> Result<Vec<f64>> {
            cols.iter()
                .zip(names)
                .map(|(&c, name)| parse_real(cell(c), name).map_err(csv_err))
                .collect()
        };
        let z = reals(&z_cols, &roles.z)?;
        let q = reals(&q_cols, &roles.q)?;
        let mut times = Vec::new();
        let mut status = Vec::new();
        for (&(wc, xc), (wn, xn)) in pair_cols.iter().zip(&roles.questionnaires) {
            match (cell(wc).is_empty(), cell(xc).is_empty()) {
                (true, true) => continue,
                (false, false) => {
                    times.push(parse_real(cell(wc), wn).map_err(csv_err)?);
                    status.push(parse_flag(cell(xc), xn).map_err(csv_err)?);
                }
                _ => {
                    return Err(csv_err(format!(
                        "questionnaire pair ('{wn}', '{xn}') is only half filled"
                    )))
                }
            }
        }
        let subject = Subject::new(id, obs_time, event, z, q, times, status, terminal)
            .map_err(|e| csv_err(e.to_string()))?;
        subjects.push(subject);
    }
    if subjects.is_empty() {
        return Err(Error::InvalidInput("input has no subject rows".into()));
    }
    Dataset::new(subjects, terminal)?.with_names(roles.z.clone(), roles.q.clone())
}

pub fn read_subjects_path(path: &Path, roles: &ColumnRoles, terminal: bool) -> Result<Dataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Config(format!("cannot open input '{}': {e}", path.display())))?;
    read_subjects_csv(file, roles, terminal)
}

/// Writes a dataset in the standard wide layout and returns the roles that
/// read it back.
pub fn write_subjects_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<ColumnRoles> {
    let max_q = dataset
        .subjects()
        .iter()
        .map(Subject::n_questionnaires)
        .max()
        .unwrap_or(0);
    let roles = ColumnRoles::standard(dataset.z_names(), dataset.q_names(), max_q);
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<&str> = roles.all().map(|(_, c)| c).collect();
    w.write_record(&header).map_err(csv_write)?;
    for s in dataset.subjects() {
        let mut row = vec![
            s.id.clone(),
            s.obs_time.to_string(),
            u8::from(s.event).to_string(),
        ];
        row.extend(s.z.iter().chain(&s.q).map(f64::to_string));
        for j in 0..max_q {
            match (s.quest_times.get(j), s.quest_status.get(j)) {
                (Some(t), Some(&x)) => {
                    row.push(t.to_string());
                    row.push(u8::from(x).to_string());
                }
                _ => row.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&row).map_err(csv_write)?;
    }
    w.flush()?;
    Ok(roles)
}

fn csv_write(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RscSettings {
    /// Width of the risk-set grid cells.
    pub width: f64,
}

impl Default for RscSettings {
    fn default() -> Self {
        RscSettings { width: 0.5 }
    }
}

/// Exposure-probability trajectories requested in the fit output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySettings {
    pub output: PathBuf,
    /// Evaluation times; each subject is reported up to its follow-up time.
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSettings {
    pub families: Vec<Family>,
    /// A binary calibration covariate to split the curves by.
    pub stratify: Option<String>,
    /// Grid size for smooth (parametric) curves.
    pub points: usize,
    pub output: Option<PathBuf>,
}

impl Default for CurveSettings {
    fn default() -> Self {
        CurveSettings {
            families: vec![Family::Npmle, Family::Weibull],
            stratify: None,
            points: 101,
            output: None,
        }
    }
}

fn default_methods() -> Vec<String> {
    vec!["lvcf".into(), "oc".into()]
}

fn default_true() -> bool {
    true
}

fn default_level() -> f64 {
    0.95
}

/// Study configuration shared by the `fit` and `curves` commands.
/// Relative paths are resolved against the configuration file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub input: PathBuf,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub columns: ColumnRoles,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default)]
    pub calibration: CalibrationSettings,
    #[serde(default)]
    pub rsc: RscSettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub terminal: bool,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub trajectories: Option<TrajectorySettings>,
    /// Where to store the fitted calibration model as JSON.
    #[serde(default)]
    pub model_output: Option<PathBuf>,
    /// A previously stored model to use instead of fitting one.
    #[serde(default)]
    pub model_input: Option<PathBuf>,
    #[serde(default)]
    pub curves: CurveSettings,
}

impl StudyConfig {
    /// Parsed method list; unknown names are a configuration error.
    pub fn method_list(&self) -> Result<Vec<Method>> {
        if self.methods.is_empty() {
            return Err(Error::Config("the method list is empty".into()));
        }
        self.methods.iter().map(|m| m.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.method_list()?;
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if !(self.rsc.width > 0.0 && self.rsc.width.is_finite()) {
            return Err(Error::Config(format!("rsc width must be positive, got {}", self.rsc.width)));
        }
        if self.calibration.knots.is_empty() {
            return Err(Error::Config("calibration.knots must list at least one candidate".into()));
        }
        if let Some(s) = &self.curves.stratify {
            if !self.columns.q.contains(s) {
                return Err(Error::Config(format!(
                    "curves.stratify column '{s}' is not one of the q columns"
                )));
            }
        }
        Ok(())
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.input);
        for p in [&mut self.output, &mut self.model_output, &mut self.model_input, &mut self.curves.output]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        if let Some(t) = &mut self.trajectories {
            fix(&mut t.output);
        }
    }
}

pub fn parse_config(text: &str) -> Result<StudyConfig> {
    let cfg: StudyConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<StudyConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config '{}': {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    cfg.resolve(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let sc: Scenario =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid scenario JSON: {e}")))?;
    sc.validate()?;
    Ok(sc)
}

pub fn model_to_json(model: &CalibrationModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(model)?)
}

/// Reads a stored calibration model and checks it can be evaluated.
pub fn parse_model(text: &str) -> Result<CalibrationModel> {
    let model: CalibrationModel = serde_json::from_str(text)?;
    let bad = |msg: String| Err(Error::InvalidInput(format!("invalid calibration model: {msg}")));
    match &model {
        CalibrationModel::Npmle(f) => {
            if f.support.len() != f.masses.len() || f.support.is_empty() {
                return bad("support and masses must be nonempty and of equal length".into());
            }
            if f.masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
                return bad("masses must be nonnegative".into());
            }
            let total: f64 = f.masses.iter().sum();
            if (total - 1.0).abs() > 1e-6 {
                return bad(format!("masses sum to {total}, not 1"));
            }
            if f.support.windows(2).any(|w| w[0].right > w[1].left) {
                return bad("support intervals must be disjoint and ordered".into());
            }
        }
        CalibrationModel::Weibull(f) => {
            if !(f.shape > 0.0 && f.shape.is_finite() && f.scale > 0.0 && f.scale.is_finite()) {
                return bad("shape and scale must be positive".into());
            }
        }
        CalibrationModel::PhSpline(f) => {
            if f.alpha.len() != f.basis.dim() {
                return bad(format!(
                    "{} spline coefficients for a basis of dimension {}",
                    f.alpha.len(),
                    f.basis.dim()
                ));
            }
            if f.alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                return bad("spline coefficients must be nonnegative".into());
            }
            if f.psi.iter().any(|p| !p.is_finite()) {
                return bad("regression coefficients must be finite".into());
            }
            if !f.pinned_psi.is_empty() && f.pinned_psi.len() != f.psi.len() {
                return bad("pinned mask does not match the regression coefficients".into());
            }
        }
    }
    Ok(model)
}

/// Monte-Carlo summary in the layout of the usual simulation tables.
pub fn write_summary_csv<W: Write>(summary: &StudySummary, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "beta0", "m_star", "Method", "Mean", "EMP.SE", "SEhat", "CP95", "Reps", "Failures",
    ])
    .map_err(csv_write)?;
    let fmt = |v: f64| format!("{v:.4}");
    for m in &summary.methods {
        w.write_record([
            fmt(summary.scenario.beta0),
            summary.scenario.m_star.to_string(),
            m.method.to_string(),
            fmt(m.mean),
            m.emp_se.map_or_else(|| "NA".to_string(), fmt),
            fmt(m.mean_se),
            fmt(m.cp95),
            m.replications.to_string(),
            m.failures.to_string(),
        ])
        .map_err(csv_write)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectories_csv<W: Write>(points: &[TrajectoryPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p).map_err(csv_write)?;
    }
    if points.is_empty() {
        w.write_record(["id", "t", "w_bar", "prob_exposed"]).map_err(csv_write)?;
    }
    w.flush()?;
    Ok(())
}

/// One vertex of a survival curve; step curves hold their value until the
/// next time in the same group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub stratum: String,
    pub family: Family,
    pub time: f64,
    pub survival: f64,
}

pub fn write_curves_csv<W: Write>(points: &[CurvePoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p).map_err(csv_write)?;
    }
    if points.is_empty() {
        w.write_record(["stratum", "family", "time", "survival"]).map_err(csv_write)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roles() -> ColumnRoles {
        ColumnRoles {
            id: "id".into(),
            time: "t".into(),
            event: "d".into(),
            z: vec!["age".into()],
            q: vec!["sex".into()],
            questionnaires: vec![("w1".into(), "x1".into()), ("w2".into(), "x2".into())],
        }
    }

    #[test]
    fn blank_pairs_mean_fewer_questionnaires() {
        let csv = "id,t,d,age,sex,w1,x1,w2,x2\na,3,1,0.5,1,1.0,0,2.5,1\nb,2,0,-1,0,1.5,0,,\n";
        let ds = read_subjects_csv(csv.as_bytes(), &roles(), true).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.subjects()[0].quest_times, vec![1.0, 2.5]);
        assert_eq!(ds.subjects()[1].n_questionnaires(), 1);
        assert_eq!(ds.z_names(), ["age"]);
    }

    #[test]
    fn malformed_row_reports_its_line() {
        let csv = "id,t,d,age,sex,w1,x1,w2,x2\na,3,1,0.5,1,1.0,0,2.5,1\nb,2,2,-1,0,,,,\n";
        match read_subjects_csv(csv.as_bytes(), &roles(), true) {
            Err(Error::Csv { row, message }) => {
                assert_eq!(row, 3);
                assert!(message.contains("'d'"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn half_pair_and_reversion_are_rejected() {
        let half = "id,t,d,age,sex,w1,x1,w2,x2\na,3,1,0.5,1,1.0,,,\n";
        assert!(matches!(read_subjects_csv(half.as_bytes(), &roles(), true), Err(Error::Csv { row: 2, .. })));
        let revert = "id,t,d,age,sex,w1,x1,w2,x2\na,3,1,0.5,1,1.0,1,2.0,0\n";
        assert!(matches!(read_subjects_csv(revert.as_bytes(), &roles(), true), Err(Error::Csv { row: 2, .. })));
    }

    #[test]
    fn missing_column_is_named() {
        let csv = "id,t,d,age,w1,x1,w2,x2\na,3,1,0.5,1.0,0,2.5,1\n";
        let err = read_subjects_csv(csv.as_bytes(), &roles(), true).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("'sex'")), "{err}");
    }

    #[test]
    fn csv_round_trip() {
        let csv = "id,t,d,age,sex,w1,x1,w2,x2\na,3,1,0.5,1,1,0,2.5,1\nb,2,0,-1,0,,,,\n";
        let ds = read_subjects_csv(csv.as_bytes(), &roles(), true).unwrap();
        let mut buf = Vec::new();
        let r = write_subjects_csv(&ds, &mut buf).unwrap();
        let back = read_subjects_csv(buf.as_slice(), &r, true).unwrap();
        assert_eq!(back.subjects(), ds.subjects());
    }

    #[test]
    fn config_defaults_and_errors() {
        let text = r#"
            input = "data.csv"
            [columns]
            id = "id"
            time = "t"
            event = "d"
            questionnaires = [["w1", "x1"]]
        "#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.method_list().unwrap(), vec![Method::Lvcf, Method::Oc]);
        assert_eq!(cfg.calibration.knots, vec![5]);
        assert!(cfg.terminal);
        let bad = text.replace("input", "methods = [\"cox\"]\ninput");
        let err = parse_config(&bad).unwrap_err().to_string();
        assert!(err.contains("lvcf") && err.contains("rsc"), "{err}");
        assert!(parse_config(&text.replace("input", "bogus = 1\ninput")).is_err());
    }

    #[test]
    fn scenario_json_is_validated() {
        let sc = parse_scenario(r#"{"beta0": 0.5, "m_star": 5}"#).unwrap();
        assert_eq!(sc.m_star, 5);
        assert_eq!(sc.n, 1000);
        assert!(parse_scenario(r#"{"n": 1}"#).is_err());
        assert!(parse_scenario(r#"{"unknown": 1}"#).is_err());
    }
}
