use serde::{Deserialize, Serialize};

use crate::data::CensoringInterval;
use crate::error::{Error, Result};

/// Nonparametric MLE of the change-time distribution: probability masses
/// on the innermost (Turnbull) intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpmleFit {
    pub support: Vec<CensoringInterval>,
    pub masses: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// No finite right endpoint was observed, so all mass sits beyond the
    /// largest left endpoint.
    pub degenerate: bool,
    #[serde(skip)]
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpmleOptions {
    /// Self-consistency residual at which iteration stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NpmleOptions {
    fn default() -> Self {
        NpmleOptions {
            tol: 1e-9,
            max_iter: 50_000,
        }
    }
}

/// Innermost intervals `(p, q]`: a left endpoint immediately followed by a
/// right endpoint in sorted order. At equal values right endpoints sort
/// first, since `(a, x]` and `(x, b]` do not overlap.
pub fn turnbull_intervals(intervals: &[CensoringInterval]) -> Vec<CensoringInterval> {
    // (value, is_left)
    let mut ends: Vec<(f64, bool)> = intervals
        .iter()
        .flat_map(|i| [(i.left, true), (i.right, false)])
        .collect();
    ends.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ends.windows(2)
        .filter(|w| w[0].1 && !w[1].1 && w[0].0 < w[1].0)
        .map(|w| CensoringInterval {
            left: w[0].0,
            right: w[1].0,
        })
        .collect()
}

/// Index range of support intervals contained in `iv`.
fn support_range(support: &[CensoringInterval], iv: &CensoringInterval) -> (usize, usize) {
    let lo = support.partition_point(|s| s.left < iv.left);
    let hi = support.partition_point(|s| s.right <= iv.right);
    (lo, hi.max(lo))
}

struct Incidence {
    ranges: Vec<(usize, usize)>,
    n_support: usize,
}

impl Incidence {
    fn new(support: &[CensoringInterval], intervals: &[CensoringInterval]) -> Self {
        Incidence {
            ranges: intervals.iter().map(|iv| support_range(support, iv)).collect(),
            n_support: support.len(),
        }
    }

    /// Returns per-subject probabilities and `(1/n) sum_i 1{j in i} / P_i`.
    fn step(&self, masses: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut prefix = Vec::with_capacity(masses.len() + 1);
        prefix.push(0.0);
        for &m in masses {
            prefix.push(prefix.last().unwrap() + m);
        }
        let mut diff = vec![0.0; self.n_support + 1];
        let probs: Vec<f64> = self
            .ranges
            .iter()
            .map(|&(lo, hi)| {
                let p = prefix[hi] - prefix[lo];
                if p > 0.0 {
                    diff[lo] += 1.0 / p;
                    diff[hi] -= 1.0 / p;
                }
                p
            })
            .collect();
        let n = self.ranges.len() as f64;
        let mut acc = 0.0;
        let weights = diff[..self.n_support]
            .iter()
            .map(|d| {
                acc += d;
                acc / n
            })
            .collect();
        (probs, weights)
    }
}

fn loglik_of(probs: &[f64]) -> f64 {
    probs.iter().map(|p| p.ln()).sum()
}

/// Self-consistency (EM) iteration for the interval-censored NPMLE.
pub fn fit_npmle(intervals: &[CensoringInterval], opts: &NpmleOptions) -> Result<NpmleFit> {
    if intervals.is_empty() {
        return Err(Error::InvalidInput("no censoring intervals to fit".into()));
    }
    if let Some(bad) = intervals.iter().find(|i| !(i.left < i.right)) {
        return Err(Error::InvalidInput(format!(
            "empty censoring interval ({}, {}]",
            bad.left, bad.right
        )));
    }
    let support = turnbull_intervals(intervals);
    let degenerate = intervals.iter().all(|i| i.right.is_infinite());
    let inc = Incidence::new(&support, intervals);
    let j = support.len();
    let mut masses = vec![1.0 / j as f64; j];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let (mut probs, mut weights) = inc.step(&masses);
    trace.push(loglik_of(&probs));
    while iterations < opts.max_iter {
        let residual = masses
            .iter()
            .zip(&weights)
            .map(|(m, w)| (m - m * w).abs())
            .fold(0.0, f64::max);
        if residual < opts.tol {
            converged = true;
            break;
        }
        for (m, w) in masses.iter_mut().zip(&weights) {
            *m *= w;
        }
        let total: f64 = masses.iter().sum();
        masses.iter_mut().for_each(|m| *m /= total);
        iterations += 1;
        (probs, weights) = inc.step(&masses);
        trace.push(loglik_of(&probs));
    }
    Ok(NpmleFit {
        support,
        masses,
        loglik: *trace.last().unwrap(),
        iterations,
        converged,
        degenerate,
        trace,
    })
}

impl NpmleFit {
    /// `P(V > v)`; mass of `(p, q]` is released at `q`.
    pub fn survival(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 1.0;
        }
        let released = self.support.partition_point(|s| s.right <= v);
        let remaining: f64 = self.masses[released..].iter().sum();
        // An empty float sum is -0.0.
        if remaining <= 0.0 {
            0.0
        } else {
            remaining.min(1.0)
        }
    }

    /// Largest `|s_j - s_j * (1/n) sum_i alpha_ij / P_i|` at the fit.
    pub fn self_consistency_residual(&self, intervals: &[CensoringInterval]) -> f64 {
        let inc = Incidence::new(&self.support, intervals);
        let (_, w) = inc.step(&self.masses);
        self.masses
            .iter()
            .zip(&w)
            .map(|(m, w)| (m - m * w).abs())
            .fold(0.0, f64::max)
    }

    /// Log-likelihood of arbitrary masses on this fit's support.
    pub fn loglik_at(&self, intervals: &[CensoringInterval], masses: &[f64]) -> f64 {
        let inc = Incidence::new(&self.support, intervals);
        loglik_of(&inc.step(masses).0)
    }

    /// Gradient of the log-likelihood with respect to the masses.
    pub fn mass_score(&self, intervals: &[CensoringInterval], masses: &[f64]) -> Vec<f64> {
        let inc = Incidence::new(&self.support, intervals);
        let n = intervals.len() as f64;
        inc.step(masses).1.into_iter().map(|w| w * n).collect()
    }
}
