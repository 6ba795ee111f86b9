//! Proportional-hazards change-time model with an I-spline cumulative
//! baseline hazard:
//!
//! `S(v | q) = exp(-Lambda0(v) exp(psi' q))`, `Lambda0(v) = sum_k alpha_k b_k(v)`,
//! `alpha_k >= 0`.
//!
//! Fitting uses the Poisson-augmentation EM for interval-censored PH data
//! (latent Poisson counts per basis member, closed-form `alpha` update given
//! `psi`, Newton update of the profiled `psi`), followed by a projected
//! Newton polish on the observed-data log likelihood. Both stages only
//! accept non-decreasing log likelihood.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{FitOptions, IntervalDerivs};
use crate::data::CensoringInterval;
use crate::error::{Error, Result};
use crate::linalg::{damped_solve, dot};
use crate::splines::SplineBasis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhSplineFit {
    pub psi: Vec<f64>,
    pub alpha: Vec<f64>,
    pub basis: SplineBasis,
    pub loglik: f64,
    pub converged: bool,
    pub em_iterations: usize,
    pub polish_iterations: usize,
    /// Norm of the projected score at the returned parameters.
    pub grad_norm: f64,
    /// `psi` coordinates held at zero because their `Q` column is identically zero.
    #[serde(default)]
    pub pinned_psi: Vec<bool>,
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// Projected-score norm at which the polish stops.
const POLISH_TOL: f64 = 1e-7;
/// Relative width of the band near `alpha = 0` treated as the bound.
const ACTIVE_BAND: f64 = 1e-6;
/// Relative log-likelihood change at which EM hands over to the Newton polish.
const EM_HANDOFF: f64 = 1e-5;
/// `alpha` values below this are treated as sitting on the boundary.
const ALPHA_FLOOR: f64 = 1e-9;

impl PhSplineFit {
    /// `(psi, alpha)` concatenated.
    pub fn eta(&self) -> Vec<f64> {
        self.psi.iter().chain(&self.alpha).copied().collect()
    }

    pub fn with_eta(&self, eta: &[f64]) -> Self {
        let p = self.psi.len();
        PhSplineFit {
            psi: eta[..p].to_vec(),
            alpha: eta[p..].to_vec(),
            trace: Vec::new(),
            ..self.clone()
        }
    }

    /// Free coordinates of `eta`: unpinned `psi`, and `alpha_k > 0`.
    pub fn free_mask(&self) -> Vec<bool> {
        let pinned = |j: usize| self.pinned_psi.get(j).copied().unwrap_or(false);
        (0..self.psi.len())
            .map(|j| !pinned(j))
            .chain(self.alpha.iter().map(|&a| a > 0.0))
            .collect()
    }

    pub fn baseline_cumhaz(&self, v: f64) -> f64 {
        if v.is_infinite() {
            return self.alpha.iter().sum();
        }
        self.basis.cumulative(&self.alpha, v)
    }

    pub fn risk_multiplier(&self, q: &[f64]) -> f64 {
        dot(&self.psi, q).exp()
    }

    pub fn survival(&self, v: f64, q: &[f64]) -> f64 {
        (-self.baseline_cumhaz(v) * self.risk_multiplier(q)).exp()
    }

    pub(crate) fn subject_derivs(
        &self,
        iv: &CensoringInterval,
        q: &[f64],
    ) -> (f64, Vec<f64>, DMatrix<f64>) {
        let bl = self.basis.ispline(iv.left);
        let br = iv.right.is_finite().then(|| self.basis.ispline(iv.right));
        let (ll, g, h) = derivs(&self.psi, &self.alpha, q, &bl, br.as_deref());
        (ll, g.iter().copied().collect(), h)
    }

    pub fn totals(
        &self,
        intervals: &[CensoringInterval],
        q: &[Vec<f64>],
    ) -> (f64, DVector<f64>, DMatrix<f64>) {
        let prep = Prepared::new(&self.basis, intervals, q);
        prep.totals(&self.psi, &self.alpha)
    }

    pub fn loglik_of(&self, intervals: &[CensoringInterval], q: &[Vec<f64>]) -> f64 {
        Prepared::new(&self.basis, intervals, q).loglik(&self.psi, &self.alpha)
    }
}

/// Log likelihood, gradient and Hessian in `(psi, alpha)` for one subject.
fn derivs(
    psi: &[f64],
    alpha: &[f64],
    q: &[f64],
    bl: &[f64],
    br: Option<&[f64]>,
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let p = psi.len();
    let k = alpha.len();
    let dim = p + k;
    let r = dot(psi, q).exp();
    let pieces = |b: &[f64]| {
        let h = r * dot(alpha, b);
        let mut g = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for a in 0..p {
            g[a] = h * q[a];
            for c in 0..p {
                hess[(a, c)] = h * q[a] * q[c];
            }
            for l in 0..k {
                let v = r * q[a] * b[l];
                hess[(a, p + l)] = v;
                hess[(p + l, a)] = v;
            }
        }
        for l in 0..k {
            g[p + l] = r * b[l];
        }
        (h, g, hess)
    };
    let (hl, gl, hl2) = pieces(bl);
    let (hr, gr, hr2) = match br {
        Some(b) => pieces(b),
        None => (f64::INFINITY, DVector::zeros(dim), DMatrix::zeros(dim, dim)),
    };
    IntervalDerivs {
        hl,
        hr,
        grad_hl: &gl,
        grad_hr: &gr,
        hess_hl: &hl2,
        hess_hr: &hr2,
    }
    .eval()
}

/// Basis values at every subject's interval endpoints.
struct Prepared<'a> {
    q: &'a [Vec<f64>],
    bl: Vec<Vec<f64>>,
    br: Vec<Option<Vec<f64>>>,
}

impl<'a> Prepared<'a> {
    fn new(basis: &SplineBasis, intervals: &[CensoringInterval], q: &'a [Vec<f64>]) -> Self {
        Prepared {
            q,
            bl: intervals.iter().map(|iv| basis.ispline(iv.left)).collect(),
            br: intervals
                .iter()
                .map(|iv| iv.right.is_finite().then(|| basis.ispline(iv.right)))
                .collect(),
        }
    }

    fn loglik(&self, psi: &[f64], alpha: &[f64]) -> f64 {
        let mut ll = 0.0;
        for i in 0..self.bl.len() {
            let r = dot(psi, &self.q[i]).exp();
            let hl = r * dot(alpha, &self.bl[i]);
            let hr = self.br[i]
                .as_ref()
                .map_or(f64::INFINITY, |b| r * dot(alpha, b));
            ll += super::interval_loglik(hl, hr);
        }
        ll
    }

    fn totals(&self, psi: &[f64], alpha: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let dim = psi.len() + alpha.len();
        let mut ll = 0.0;
        let mut g = DVector::zeros(dim);
        let mut h = DMatrix::zeros(dim, dim);
        for i in 0..self.bl.len() {
            let (l, gi, hi) = derivs(psi, alpha, &self.q[i], &self.bl[i], self.br[i].as_deref());
            ll += l;
            g += gi;
            h += hi;
        }
        (ll, g, h)
    }

    /// One EM update of `(psi, alpha)`.
    fn em_step(&self, psi: &[f64], alpha: &[f64], pinned: &[bool]) -> (Vec<f64>, Vec<f64>) {
        let n = self.bl.len();
        let p = psi.len();
        let k = alpha.len();
        // Expected latent counts per basis member, and the exposure basis
        // (right endpoint when finite, else left endpoint).
        let mut counts_total = vec![0.0; k];
        let mut subject_counts = vec![0.0; n];
        for i in 0..n {
            let Some(br) = &self.br[i] else { continue };
            let r = dot(psi, &self.q[i]).exp();
            let diff: Vec<f64> = br.iter().zip(&self.bl[i]).map(|(a, b)| a - b).collect();
            let lam = dot(alpha, &diff);
            if lam <= 0.0 {
                continue;
            }
            let d = r * lam;
            let expected = if d < 1e-12 { 1.0 } else { d / (-(-d).exp_m1()) };
            subject_counts[i] = expected;
            for l in 0..k {
                counts_total[l] += expected * alpha[l] * diff[l] / lam;
            }
        }
        let exposure = |i: usize| -> &[f64] { self.br[i].as_deref().unwrap_or(&self.bl[i]) };

        let mut psi_new = psi.to_vec();
        if p > 0 {
            // Profile objective in psi after substituting the closed-form alpha.
            let objective = |psi: &[f64]| -> f64 {
                let mut lin = 0.0;
                let mut denom = vec![0.0; k];
                for i in 0..n {
                    let r = dot(psi, &self.q[i]).exp();
                    lin += subject_counts[i] * dot(psi, &self.q[i]);
                    for (d, e) in denom.iter_mut().zip(exposure(i)) {
                        *d += e * r;
                    }
                }
                lin - counts_total
                    .iter()
                    .zip(&denom)
                    .filter(|(a, _)| **a > 0.0)
                    .map(|(a, d)| a * d.ln())
                    .sum::<f64>()
            };
            // One safeguarded Newton step per EM iteration is enough for ascent.
            {
                let mut grad = DVector::zeros(p);
                let mut hess = DMatrix::zeros(p, p);
                let mut s0 = vec![0.0; k];
                let mut s1 = vec![0.0; k * p];
                let mut s2 = vec![0.0; k * p * p];
                for i in 0..n {
                    let qi = &self.q[i];
                    let r = dot(&psi_new, qi).exp();
                    for a in 0..p {
                        grad[a] += subject_counts[i] * qi[a];
                    }
                    for (l, &e) in exposure(i).iter().enumerate() {
                        if e == 0.0 {
                            continue;
                        }
                        let w = e * r;
                        s0[l] += w;
                        for a in 0..p {
                            let wa = w * qi[a];
                            s1[l * p + a] += wa;
                            for c in 0..p {
                                s2[(l * p + a) * p + c] += wa * qi[c];
                            }
                        }
                    }
                }
                for l in 0..k {
                    if counts_total[l] <= 0.0 || s0[l] <= 0.0 {
                        continue;
                    }
                    for a in 0..p {
                        let ma = s1[l * p + a] / s0[l];
                        grad[a] -= counts_total[l] * ma;
                        for c in 0..p {
                            let mc = s1[l * p + c] / s0[l];
                            hess[(a, c)] -= counts_total[l] * (s2[(l * p + a) * p + c] / s0[l] - ma * mc);
                        }
                    }
                }
                for j in 0..p {
                    if pinned[j] {
                        grad[j] = 0.0;
                        for c in 0..p {
                            hess[(j, c)] = 0.0;
                            hess[(c, j)] = 0.0;
                        }
                        hess[(j, j)] = -1.0;
                    }
                }
                if let Some(step) = (grad.norm() >= 1e-12)
                    .then(|| damped_solve(&(-hess), &grad))
                    .flatten()
                {
                    let base = objective(&psi_new);
                    let mut s = 1.0;
                    for _ in 0..30 {
                        let cand: Vec<f64> = psi_new.iter().zip(step.iter()).map(|(a, d)| a + s * d).collect();
                        if objective(&cand) >= base {
                            psi_new = cand;
                            break;
                        }
                        s *= 0.5;
                    }
                }
            }
        }

        let mut denom = vec![0.0; k];
        for i in 0..n {
            let r = dot(&psi_new, &self.q[i]).exp();
            for (d, e) in denom.iter_mut().zip(exposure(i)) {
                *d += e * r;
            }
        }
        let alpha_new = counts_total
            .iter()
            .zip(&denom)
            .map(|(a, d)| if *a > 0.0 && *d > 0.0 { a / d } else { 0.0 })
            .collect();
        (psi_new, alpha_new)
    }
}

/// Labels of `Q` columns that are linearly dependent on an intercept and
/// the preceding columns; identically zero columns are reported separately.
fn dependent_columns(q: &[Vec<f64>], dim: usize) -> (Vec<usize>, Vec<bool>) {
    let zero: Vec<bool> = (0..dim)
        .map(|j| q.iter().all(|row| row[j] == 0.0))
        .collect();
    let n = q.len();
    let mut basis: Vec<Vec<f64>> = vec![vec![1.0 / (n as f64).sqrt(); n]];
    let mut dependent = Vec::new();
    for j in (0..dim).filter(|&j| !zero[j]) {
        let mut col: Vec<f64> = q.iter().map(|row| row[j]).collect();
        let norm0 = dot(&col, &col).sqrt();
        for b in &basis {
            let c = dot(&col, b);
            col.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let norm = dot(&col, &col).sqrt();
        if norm <= 1e-9 * norm0.max(1e-300) {
            dependent.push(j);
        } else {
            col.iter_mut().for_each(|x| *x /= norm);
            basis.push(col);
        }
    }
    (dependent, zero)
}

/// Fits the PH I-spline model. `init` optionally warm-starts `(psi, alpha)`;
/// an all-zero `alpha` start has infinite negative log likelihood and is
/// replaced by the uniform start.
pub fn fit_ph_spline(
    intervals: &[CensoringInterval],
    q: &[Vec<f64>],
    basis: &SplineBasis,
    opts: &FitOptions,
    init: Option<(&[f64], &[f64])>,
) -> Result<PhSplineFit> {
    if intervals.is_empty() {
        return Err(Error::InvalidInput("no censoring intervals to fit".into()));
    }
    if q.len() != intervals.len() {
        return Err(Error::InvalidInput(format!(
            "{} covariate rows for {} intervals",
            q.len(),
            intervals.len()
        )));
    }
    let p = q.first().map_or(0, Vec::len);
    if q.iter().any(|row| row.len() != p) {
        return Err(Error::InvalidInput("ragged calibration covariate rows".into()));
    }
    let (dependent, pinned) = dependent_columns(q, p);
    if !dependent.is_empty() {
        return Err(Error::Collinear {
            columns: dependent.iter().map(|j| format!("Q column {}", j + 1)).collect(),
        });
    }
    let (_, upper) = basis.boundary();
    if intervals
        .iter()
        .flat_map(|iv| [iv.left, iv.right])
        .any(|v| v.is_finite() && v > upper)
    {
        return Err(Error::InvalidInput(
            "spline basis does not cover every finite interval endpoint".into(),
        ));
    }

    let k = basis.dim();
    let (mut psi, mut alpha) = match init {
        Some((ps, al)) if ps.len() == p && al.len() == k && al.iter().any(|&a| a > 0.0) => {
            (ps.to_vec(), al.to_vec())
        }
        _ => (vec![0.0; p], vec![1.0; k]),
    };
    for (s, &pin) in psi.iter_mut().zip(&pinned) {
        if pin {
            *s = 0.0;
        }
    }
    let prep = Prepared::new(basis, intervals, q);
    let mut ll = prep.loglik(&psi, &alpha);
    if !ll.is_finite() {
        alpha = vec![1.0; k];
        ll = prep.loglik(&psi, &alpha);
    }
    let mut trace = vec![ll];
    let mut em_converged = false;
    let mut em_iterations = 0;
    while em_iterations < opts.max_iter {
        let (psi_new, alpha_new) = prep.em_step(&psi, &alpha, &pinned);
        let ll_new = prep.loglik(&psi_new, &alpha_new);
        em_iterations += 1;
        if !(ll_new >= ll) {
            // Numerical stall; keep the best point so far.
            break;
        }
        let rel = (ll_new - ll).abs() / ll.abs().max(1e-300);
        psi = psi_new;
        alpha = alpha_new;
        ll = ll_new;
        trace.push(ll);
        if rel < opts.tol {
            em_converged = true;
            break;
        }
        if rel < EM_HANDOFF {
            break;
        }
    }

    // Projected Newton polish.
    let dim = p + k;
    let mut polish_iterations = 0;
    let mut grad_norm;
    let mut stationary = false;
    loop {
        let (_, g, h) = prep.totals(&psi, &alpha);
        // Coefficients within `eps` of the bound whose score pushes them
        // further down are held at the bound for this step.
        let eps = ACTIVE_BAND * alpha.iter().fold(0.0, |m: f64, &a| m.max(a));
        let free: Vec<usize> = (0..dim)
            .filter(|&c| {
                if c < p {
                    !pinned[c]
                } else {
                    alpha[c - p] > eps || g[c] > 0.0
                }
            })
            .collect();
        for l in 0..k {
            if alpha[l] <= eps && g[p + l] <= 0.0 && alpha[l] > 0.0 {
                let mut cand = alpha.clone();
                cand[l] = 0.0;
                let cl = prep.loglik(&psi, &cand);
                if cl >= ll - 1e-12 * (1.0 + ll.abs()) {
                    alpha = cand;
                    ll = cl;
                }
            }
        }
        grad_norm = free.iter().map(|&c| g[c] * g[c]).sum::<f64>().sqrt();
        if grad_norm < POLISH_TOL || free.is_empty() {
            stationary = true;
            break;
        }
        if polish_iterations >= 100 {
            break;
        }
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&c| g[c]));
        let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| -h[(free[a], free[b])]);
        let Some(step) = damped_solve(&hf, &gf) else {
            break;
        };
        // Predicted gain below the resolution of the objective.
        if gf.dot(&step) <= 1e-12 * (1.0 + ll.abs()) {
            stationary = true;
            break;
        }
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut cand_psi = psi.clone();
            let mut cand_alpha = alpha.clone();
            for (idx, &c) in free.iter().enumerate() {
                if c < p {
                    cand_psi[c] += s * step[idx];
                } else {
                    cand_alpha[c - p] = (cand_alpha[c - p] + s * step[idx]).max(0.0);
                }
            }
            let cl = prep.loglik(&cand_psi, &cand_alpha);
            if cl.is_finite() && cl >= ll {
                let gain = cl - ll;
                psi = cand_psi;
                alpha = cand_alpha;
                ll = cl;
                trace.push(ll);
                accepted = gain > 0.0 || s == 1.0;
                break;
            }
            s *= 0.5;
        }
        polish_iterations += 1;
        if !accepted {
            break;
        }
    }

    // Coordinates resting on the boundary with a non-positive score are
    // snapped to exactly zero.
    let (_, g, _) = prep.totals(&psi, &alpha);
    let mut snapped = alpha.clone();
    for (l, a) in snapped.iter_mut().enumerate() {
        if *a < ALPHA_FLOOR && g[p + l] <= 0.0 {
            *a = 0.0;
        }
    }
    let snapped_ll = prep.loglik(&psi, &snapped);
    if snapped_ll >= ll {
        alpha = snapped;
        ll = snapped_ll;
        trace.push(ll);
    }

    Ok(PhSplineFit {
        psi,
        alpha,
        basis: basis.clone(),
        loglik: ll,
        converged: em_converged || stationary,
        em_iterations,
        polish_iterations,
        grad_norm,
        pinned_psi: pinned,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn iv(l: f64, r: f64) -> CensoringInterval {
        CensoringInterval::new(l, r).unwrap()
    }

    fn toy() -> (Vec<CensoringInterval>, Vec<Vec<f64>>) {
        let ivs = vec![
            iv(0.0, 0.5),
            iv(0.3, 1.2),
            iv(1.0, f64::INFINITY),
            iv(0.0, 2.0),
            iv(1.5, 2.5),
            iv(2.0, f64::INFINITY),
            iv(0.2, 0.9),
            iv(0.0, 1.1),
            iv(0.6, 3.0),
            iv(2.5, f64::INFINITY),
        ];
        let q = vec![
            vec![1.0, 0.3],
            vec![0.0, -0.2],
            vec![0.0, 0.5],
            vec![1.0, 0.1],
            vec![0.0, -0.7],
            vec![1.0, 0.9],
            vec![1.0, -0.4],
            vec![0.0, 0.2],
            vec![1.0, 0.0],
            vec![0.0, -0.1],
        ];
        (ivs, q)
    }

    #[test]
    fn unit_exponential_survival() {
        // With linear I-splines on one span, alpha = U gives Lambda(v) = v.
        let basis = SplineBasis::new(1, vec![], 0.0, 10.0).unwrap();
        let fit = PhSplineFit {
            psi: vec![1.0],
            alpha: vec![10.0],
            basis,
            loglik: 0.0,
            converged: true,
            em_iterations: 0,
            polish_iterations: 0,
            grad_norm: 0.0,
            pinned_psi: vec![false],
            trace: vec![],
        };
        assert_relative_eq!(fit.survival(1.3, &[0.0]), (-1.3f64).exp(), max_relative = 1e-12);
        let doubled = [2f64.ln()];
        assert_relative_eq!(
            fit.survival(1.3, &doubled),
            fit.survival(1.3, &[0.0]).powi(2),
            max_relative = 1e-12
        );
        assert_eq!(fit.survival(0.0, &doubled), 1.0);
    }

    #[test]
    fn fit_is_monotone_and_stationary() {
        let (ivs, q) = toy();
        let basis = SplineBasis::for_intervals(2, 2, &ivs).unwrap();
        let fit = fit_ph_spline(&ivs, &q, &basis, &FitOptions::default(), None).unwrap();
        assert!(fit.converged, "{fit:?}");
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0], "trace decreased: {:?}", w);
        }
        assert!(fit.trace[1] > fit.trace[0]);
        assert!(fit.alpha.iter().all(|&a| a >= 0.0));
        assert_relative_eq!(fit.loglik, fit.loglik_of(&ivs, &q), max_relative = 1e-12);

        let eta = fit.eta();
        for c in 0..eta.len() {
            for sign in [-1.0, 1.0] {
                let mut e = eta.clone();
                e[c] += sign * 1e-3;
                if c >= 2 && e[c] < 0.0 {
                    continue;
                }
                let l = fit.with_eta(&e).loglik_of(&ivs, &q);
                assert!(l <= fit.loglik + 1e-6, "coordinate {c} sign {sign}: {l} > {}", fit.loglik);
            }
        }
    }

    #[test]
    fn analytic_score_matches_finite_differences() {
        let (ivs, q) = toy();
        let basis = SplineBasis::for_intervals(2, 2, &ivs).unwrap();
        let fit = PhSplineFit {
            psi: vec![0.4, -0.3],
            alpha: vec![0.5, 0.8, 0.2, 1.1],
            basis,
            loglik: 0.0,
            converged: true,
            em_iterations: 0,
            polish_iterations: 0,
            grad_norm: 0.0,
            pinned_psi: vec![false; 2],
            trace: vec![],
        };
        let (_, g, h) = fit.totals(&ivs, &q);
        let eta = fit.eta();
        let step = 1e-6;
        for c in 0..eta.len() {
            let mut up = eta.clone();
            up[c] += step;
            let mut dn = eta.clone();
            dn[c] -= step;
            let fd = (fit.with_eta(&up).loglik_of(&ivs, &q) - fit.with_eta(&dn).loglik_of(&ivs, &q))
                / (2.0 * step);
            assert_relative_eq!(fd, g[c], max_relative = 1e-5, epsilon = 1e-8);
            let (_, gu, _) = fit.with_eta(&up).totals(&ivs, &q);
            let (_, gd, _) = fit.with_eta(&dn).totals(&ivs, &q);
            for r in 0..eta.len() {
                let fd2 = (gu[r] - gd[r]) / (2.0 * step);
                assert_relative_eq!(fd2, h[(r, c)], max_relative = 1e-4, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn collinear_columns_are_named() {
        let (ivs, mut q) = toy();
        for row in &mut q {
            row.push(2.0 * row[1] - 1.0);
        }
        let basis = SplineBasis::for_intervals(2, 2, &ivs).unwrap();
        match fit_ph_spline(&ivs, &q, &basis, &FitOptions::default(), None) {
            Err(Error::Collinear { columns }) => assert_eq!(columns, vec!["Q column 3"]),
            other => panic!("expected collinearity error, got {other:?}"),
        }
    }

    #[test]
    fn zero_column_is_pinned() {
        let (ivs, q) = toy();
        let basis = SplineBasis::for_intervals(2, 2, &ivs).unwrap();
        let with_zero: Vec<Vec<f64>> = q.iter().map(|r| vec![r[0], 0.0, r[1]]).collect();
        let a = fit_ph_spline(&ivs, &q, &basis, &FitOptions::default(), None).unwrap();
        let b = fit_ph_spline(&ivs, &with_zero, &basis, &FitOptions::default(), None).unwrap();
        assert_eq!(b.psi[1], 0.0);
        assert!(!b.free_mask()[1]);
        assert_relative_eq!(a.loglik, b.loglik, max_relative = 1e-8);
    }

    #[test]
    fn zero_alpha_start_is_replaced() {
        let (ivs, q) = toy();
        let basis = SplineBasis::for_intervals(2, 2, &ivs).unwrap();
        let zeros = vec![0.0; basis.dim()];
        let fit = fit_ph_spline(&ivs, &q, &basis, &FitOptions::default(), Some((&[0.0, 0.0], &zeros))).unwrap();
        assert!(fit.trace[0].is_finite());
        assert!(fit.trace[1] > fit.trace[0]);
    }
}
