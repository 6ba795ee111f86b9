//! `calibsurv`: fit calibrated Cox models, run the Monte-Carlo study and
//! export change-time survival curves.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use calibsurv::estimators::Method;
use calibsurv::icfit::{Criterion, Family};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "calibsurv", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the requested estimators to a subject CSV.
    Fit(FitArgs),
    /// Run the Monte-Carlo study for a scenario.
    Simulate(SimulateArgs),
    /// Write nonparametric and Weibull change-time survival curves.
    Curves(CurvesArgs),
}

/// Settings shared by every command that fits a first-stage model.
#[derive(Args, Clone, Default)]
pub struct CalibrationArgs {
    /// Calibration family: npmle, weibull or ph-spline.
    #[arg(long)]
    pub family: Option<Family>,
    /// Candidate numbers of interior knots, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub knots: Option<Vec<usize>>,
    #[arg(long)]
    pub degree: Option<usize>,
    /// Knot-selection criterion: aic or bic.
    #[arg(long)]
    pub criterion: Option<Criterion>,
    /// Width of the risk-set calibration grid.
    #[arg(long)]
    pub rsc_width: Option<f64>,
}

#[derive(Args)]
pub struct FitArgs {
    /// Study configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Subject CSV; overrides the configured input.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Estimator to fit; repeat for several (lvcf, midi, oc, rsc).
    #[arg(long = "method")]
    pub methods: Vec<Method>,
    #[command(flatten)]
    pub calibration: CalibrationArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Result JSON; standard output when neither this nor the config names one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Scenario JSON; the built-in default scenario when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long = "method")]
    pub methods: Vec<Method>,
    #[command(flatten)]
    pub calibration: CalibrationArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Summary CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CurvesArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Restrict to one family (npmle or weibull).
    #[arg(long)]
    pub family: Option<Family>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Curves(a) => commands::curves(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                calibsurv::Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
