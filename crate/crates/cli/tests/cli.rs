use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use calibsurv::inference::confidence_interval;
use calibsurv::io::write_subjects_csv;
use calibsurv::simulate::{gen_dataset, replicate_rng, Scenario};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_calibsurv"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("study.toml");
    std::fs::write(&path, body).unwrap();
    path
}

/// Partial log-likelihood of the fixture under LVCF, enumerating every
/// risk set from the raw rows.
fn toy_loglik(beta: f64) -> f64 {
    // (time, event, questionnaires)
    let rows: [(f64, bool, &[(f64, bool)]); 5] = [
        (1.0, true, &[(0.5, true)]),
        (2.0, true, &[(0.5, false), (1.5, true)]),
        (3.0, false, &[(0.8, false), (1.5, true)]),
        (2.5, true, &[(1.0, false)]),
        (4.0, true, &[(0.8, false), (3.0, true)]),
    ];
    let x = |q: &[(f64, bool)], t: f64| q.iter().filter(|(w, _)| *w <= t).last().is_some_and(|(_, s)| *s);
    let mut ll = 0.0;
    for &(t, d, q) in &rows {
        if !d {
            continue;
        }
        let denom: f64 = rows
            .iter()
            .filter(|r| r.0 >= t)
            .map(|r| if x(r.2, t) { beta.exp() } else { 1.0 })
            .sum();
        ll += if x(q, t) { beta } else { 0.0 } - denom.ln();
    }
    ll
}

#[test]
fn lvcf_fit_matches_golden_file() {
    let out = run(&["fit", "--config", fixture("toy5.toml").to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let golden = std::fs::read_to_string(fixture("toy5_lvcf.golden.json")).unwrap();
    assert_eq!(stdout(&out), golden);
}

#[test]
fn golden_file_agrees_with_enumeration_oracle() {
    let golden: Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("toy5_lvcf.golden.json")).unwrap()).unwrap();
    let coef = &golden["fits"][0]["coefficients"][0];
    let beta = coef["estimate"].as_f64().unwrap();
    let se = coef["se"].as_f64().unwrap();
    // Maximize by golden-section search on a bracket, then compare.
    let (mut lo, mut hi) = (-10.0f64, 10.0f64);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-12 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if toy_loglik(a) < toy_loglik(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    let oracle = 0.5 * (lo + hi);
    assert!((beta - oracle).abs() < 1e-8, "{beta} vs {oracle}");
    assert!((golden["fits"][0]["loglik"].as_f64().unwrap() - toy_loglik(oracle)).abs() < 1e-10);
    let h = 1e-4;
    let curv = -(toy_loglik(oracle + h) - 2.0 * toy_loglik(oracle) + toy_loglik(oracle - h)) / (h * h);
    assert!((se - curv.sqrt().recip()).abs() < 1e-5 * se);
}

#[test]
fn fit_output_round_trips_confidence_intervals() {
    let out = run(&["fit", "--config", fixture("toy5.toml").to_str().unwrap(), "--method", "midi", "--method", "lvcf"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let fits = doc["fits"].as_array().unwrap();
    assert_eq!(fits.len(), 2);
    assert_eq!(fits[0]["method"], "MIDI");
    for fit in fits {
        let report: calibsurv::estimators::FitReport = serde_json::from_value(fit.clone()).unwrap();
        for c in &report.coefficients {
            let (lo, hi) = confidence_interval(c.estimate, c.se, report.level);
            assert_eq!((lo, hi), (c.ci_lower, c.ci_upper));
            assert_eq!(lo.exp(), c.hr_ci_lower);
        }
    }
}

#[test]
fn unknown_method_is_a_usage_error() {
    let out = run(&["fit", "--config", fixture("toy5.toml").to_str().unwrap(), "--method", "cox"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    for m in ["lvcf", "midi", "oc", "rsc"] {
        assert!(err.contains(m), "{err}");
    }
    let out = run(&["simulate", "--reps", "1", "--method", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_row_reports_row_number() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "id,time,event,w1,x1\na,1.0,1,0.5,1\nb,oops,0,,\n").unwrap();
    let cfg = write_config(
        dir.path(),
        "input = \"bad.csv\"\nmethods = [\"lvcf\"]\n[columns]\nid = \"id\"\ntime = \"time\"\nevent = \"event\"\nquestionnaires = [[\"w1\", \"x1\"]]\n",
    );
    let out = run(&["fit", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("row 3"), "{}", stderr(&out));
}

#[test]
fn missing_q_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixture("toy5.csv"), dir.path().join("toy5.csv")).unwrap();
    let cfg = write_config(
        dir.path(),
        "input = \"toy5.csv\"\nmethods = [\"oc\"]\n[calibration]\nfamily = \"ph-spline\"\n[columns]\nid = \"id\"\ntime = \"time\"\nevent = \"event\"\nq = [\"sex\"]\nquestionnaires = [[\"w1\", \"x1\"], [\"w2\", \"x2\"]]\n",
    );
    let out = run(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("configuration error") && err.contains("'sex'"), "{err}");
}

fn simulated_study(dir: &Path) -> PathBuf {
    let sc = Scenario {
        n: 300,
        m_star: 3,
        ..Scenario::default()
    };
    let ds = gen_dataset(&sc, &mut replicate_rng(11, 0)).unwrap();
    let file = std::fs::File::create(dir.join("sim.csv")).unwrap();
    let roles = write_subjects_csv(&ds, file).unwrap();
    let quoted = |v: &[String]| v.iter().map(|c| format!("\"{c}\"")).collect::<Vec<_>>().join(", ");
    let pairs = roles
        .questionnaires
        .iter()
        .map(|(w, x)| format!("[\"{w}\", \"{x}\"]"))
        .collect::<Vec<_>>()
        .join(", ");
    write_config(
        dir,
        &format!(
            "input = \"sim.csv\"\nmethods = [\"lvcf\", \"oc\"]\nmodel_output = \"model.json\"\n\
             [trajectories]\noutput = \"traj.csv\"\ntimes = [0.5, 1.0, 2.0]\n\
             [columns]\nid = \"id\"\ntime = \"time\"\nevent = \"event\"\nz = [{}]\nq = [{}]\nquestionnaires = [{pairs}]\n",
            quoted(&roles.z),
            quoted(&roles.q)
        ),
    )
}

#[test]
fn knot_selection_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulated_study(dir.path());
    let out = run(&[
        "fit",
        "--config",
        cfg.to_str().unwrap(),
        "--method",
        "oc",
        "--family",
        "ph-spline",
        "--knots",
        "3,5",
        "--criterion",
        "bic",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let cal = &doc["calibration"];
    let trace = cal["knot_trace"].as_array().unwrap();
    assert_eq!(trace.len(), 2);
    assert_eq!(trace[0]["m"], 3);
    assert_eq!(trace[1]["m"], 5);
    let bics: Vec<f64> = trace.iter().map(|c| c["bic"].as_f64().unwrap()).collect();
    let best = if bics[0] <= bics[1] { 3 } else { 5 };
    assert_eq!(cal["selected_knots"], best);
    assert_eq!(doc["fits"][0]["variance"], "sandwich");
}

#[test]
fn stored_model_reproduces_the_fit_and_trajectories_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulated_study(dir.path());
    let first = run(&["fit", "--config", cfg.to_str().unwrap()]);
    assert!(first.status.success(), "{}", stderr(&first));
    let traj = std::fs::read_to_string(dir.path().join("traj.csv")).unwrap();
    assert!(traj.starts_with("id,t,w_bar,prob_exposed"));
    assert!(traj.lines().count() > 300);

    let text = std::fs::read_to_string(&cfg).unwrap();
    std::fs::write(&cfg, text.replace("model_output", "model_input")).unwrap();
    let second = run(&["fit", "--config", cfg.to_str().unwrap()]);
    assert!(second.status.success(), "{}", stderr(&second));
    let a: Value = serde_json::from_str(&stdout(&first)).unwrap();
    let b: Value = serde_json::from_str(&stdout(&second)).unwrap();
    assert_eq!(a["fits"], b["fits"]);
    assert_eq!(b["calibration"]["source"], "model.json");
}

#[test]
fn stored_model_with_other_covariates_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulated_study(dir.path());
    assert!(run(&["fit", "--config", cfg.to_str().unwrap()]).status.success());
    let text = std::fs::read_to_string(&cfg).unwrap();
    let narrowed = text
        .replace("model_output", "model_input")
        .replace("q = [\"q1\", \"q2\"]", "q = [\"q1\"]");
    assert_ne!(narrowed, text.replace("model_output", "model_input"));
    std::fs::write(&cfg, narrowed).unwrap();
    let out = run(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("2 calibration covariates"), "{}", stderr(&out));
}

#[test]
fn simulate_is_reproducible_and_echoes_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    std::fs::write(&scenario, r#"{"n": 200, "beta0": 0.5, "m_star": 2, "seed": 99}"#).unwrap();
    let args = |out: &str| {
        vec![
            "simulate".to_string(),
            "--config".into(),
            scenario.to_str().unwrap().into(),
            "--reps".into(),
            "2".into(),
            "--method".into(),
            "lvcf".into(),
            "--method".into(),
            "midi".into(),
            "--workers".into(),
            "1".into(),
            "--out".into(),
            dir.path().join(out).to_str().unwrap().into(),
        ]
    };
    let a = bin().args(args("a.csv")).output().unwrap();
    let b = bin().args(args("b.csv")).output().unwrap();
    assert!(a.status.success() && b.status.success(), "{}", stderr(&a));
    assert!(stderr(&a).contains("seed: 99"));
    let ca = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let cb = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(ca, cb);
    let mut lines = ca.lines();
    assert_eq!(lines.next(), Some("beta0,m_star,Method,Mean,EMP.SE,SEhat,CP95,Reps,Failures"));
    assert!(lines.next().unwrap().starts_with("0.5000,2,LVCF,"));
}

#[test]
fn invalid_scenario_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    std::fs::write(&scenario, r#"{"n": 1}"#).unwrap();
    let out = run(&["simulate", "--config", scenario.to_str().unwrap(), "--reps", "1"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("n must be at least 2"), "{}", stderr(&out));
    std::fs::write(&scenario, "{not json").unwrap();
    let out = run(&["simulate", "--config", scenario.to_str().unwrap(), "--reps", "1"]);
    assert!(stderr(&out).contains("invalid scenario JSON"), "{}", stderr(&out));
}

fn curves_setup(dir: &Path, rows: &str, extra: &str) -> PathBuf {
    std::fs::write(dir.join("c.csv"), format!("id,time,event,g,w1,x1,w2,x2\n{rows}")).unwrap();
    write_config(
        dir,
        &format!(
            "input = \"c.csv\"\n[columns]\nid = \"id\"\ntime = \"time\"\nevent = \"event\"\nq = [\"g\"]\nquestionnaires = [[\"w1\", \"x1\"], [\"w2\", \"x2\"]]\n{extra}"
        ),
    )
}

#[test]
fn single_interval_gives_a_unit_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = curves_setup(dir.path(), "a,3,0,0,1.0,0,2.0,1\n", "");
    let out = run(&["curves", "--config", cfg.to_str().unwrap(), "--family", "npmle"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        stdout(&out),
        "stratum,family,time,survival\nall,npmle,0.0,1.0\nall,npmle,2.0,0.0\n"
    );
}

#[test]
fn stratified_curves_have_two_groups() {
    let dir = tempfile::tempdir().unwrap();
    let rows = "a,3,0,0,1.0,0,2.0,1\nb,3,0,1,0.5,1,,\nc,4,1,1,1.0,0,3.0,1\nd,4,0,0,2.5,1,,\n";
    let cfg = curves_setup(dir.path(), rows, "[curves]\nstratify = \"g\"\npoints = 5\n");
    let out = run(&["curves", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let strata: std::collections::BTreeSet<&str> =
        text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(strata.into_iter().collect::<Vec<_>>(), ["g=0", "g=1"]);
    assert_eq!(text.lines().filter(|l| l.contains(",weibull,")).count(), 10);
}

#[test]
fn empty_stratum_is_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let rows = "a,3,0,0,1.0,0,2.0,1\nd,4,0,0,2.5,1,,\n";
    let cfg = curves_setup(dir.path(), rows, "[curves]\nstratify = \"g\"\nfamilies = [\"npmle\"]\n");
    let out = run(&["curves", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("g=1"), "{}", stderr(&out));
    assert!(stdout(&out).lines().skip(1).all(|l| l.starts_with("g=0,")));
}

#[test]
fn weibull_curve_matches_exponential_truth() {
    use rand::Rng;
    let scale = 2.0;
    let mut rng = replicate_rng(11, 0);
    let mut rows = String::new();
    for i in 0..5000 {
        let v = -scale * (1.0 - rng.random::<f64>()).ln();
        let w1 = rng.random_range(0.0..2.5);
        let w2 = rng.random_range(2.5..5.0);
        rows.push_str(&format!("s{i},6,0,0,{w1},{},{w2},{}\n", u8::from(w1 >= v), u8::from(w2 >= v)));
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = curves_setup(dir.path(), &rows, "");
    let out = run(&["curves", "--config", cfg.to_str().unwrap(), "--family", "weibull"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut points = 0;
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let (t, s): (f64, f64) = (cols[2].parse().unwrap(), cols[3].parse().unwrap());
        assert!((s - (-t / scale).exp()).abs() <= 0.02, "S({t}) = {s}");
        points += 1;
    }
    assert_eq!(points, 101);
}
