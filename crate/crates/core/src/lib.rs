//! Two-stage calibration estimators for a Cox model whose binary,
//! monotone time-dependent covariate is only observed at sparse
//! questionnaire times.
//!
//! The first stage fits a model for the change-time `V` of the covariate
//! from interval-censored questionnaire data ([`icfit`]). The second stage
//! plugs the fitted distribution into the partial likelihood through
//! `E[exp(beta X(t)) | history]` ([`calibration`], [`estimators`]), with a
//! sandwich variance that accounts for the first-stage fit ([`inference`]).
//! [`simulate`] contains the data-generating process and Monte-Carlo
//! harness used to check the estimators end to end.

pub mod calibration;
pub mod data;
pub mod error;
pub mod estimators;
pub mod icfit;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod simulate;
pub mod splines;

pub use calibration::{mgf_expectation, prob_exposed, RiskSetCalibration};
pub use data::{build_interval, CensoringInterval, Dataset, History, Subject};
pub use error::{Error, Result};
pub use estimators::{fit_lvcf, fit_midi, fit_oc, fit_rsc, MainFit, Method};
pub use icfit::{CalibrationModel, Family};
pub use splines::SplineBasis;
