//! Monotone I-spline basis and its M-spline derivative.
//!
//! With polynomial degree `d` and `m` interior knots on `[lower, upper]`
//! there are `K = m + d` basis members. M-splines are normalized B-splines
//! of order `d` (each integrates to one), and the matching I-spline is the
//! running integral of its M-spline, written as a tail sum of order `d + 1`
//! B-splines on the same clamped knot vector.

use serde::{Deserialize, Serialize};

use crate::data::CensoringInterval;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisSpec", into = "BasisSpec")]
pub struct SplineBasis {
    degree: usize,
    interior: Vec<f64>,
    lower: f64,
    upper: f64,
    knots: Vec<f64>,
}

/// Serialized form: the knot vector is rebuilt on load.
#[derive(Serialize, Deserialize)]
struct BasisSpec {
    degree: usize,
    interior_knots: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl TryFrom<BasisSpec> for SplineBasis {
    type Error = Error;

    fn try_from(spec: BasisSpec) -> Result<Self> {
        SplineBasis::new(spec.degree, spec.interior_knots, spec.lower, spec.upper)
    }
}

impl From<SplineBasis> for BasisSpec {
    fn from(b: SplineBasis) -> Self {
        BasisSpec {
            degree: b.degree,
            interior_knots: b.interior,
            lower: b.lower,
            upper: b.upper,
        }
    }
}

/// Relative inflation applied to the largest finite endpoint so that
/// observed times sit strictly inside the basis support.
pub const UPPER_INFLATION: f64 = 1.001;

/// Highest supported polynomial degree.
pub const MAX_DEGREE: usize = 10;

impl SplineBasis {
    pub fn new(degree: usize, interior: Vec<f64>, lower: f64, upper: f64) -> Result<Self> {
        if degree == 0 || degree > MAX_DEGREE {
            return Err(Error::InvalidInput(format!(
                "spline degree must be between 1 and {MAX_DEGREE}, got {degree}"
            )));
        }
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidInput(format!(
                "spline boundary [{lower}, {upper}] is invalid"
            )));
        }
        if interior.windows(2).any(|w| w[0] >= w[1])
            || interior.iter().any(|&k| !(k > lower && k < upper))
        {
            return Err(Error::InvalidInput(
                "interior knots must be increasing and strictly inside the boundary".into(),
            ));
        }
        let mut basis = SplineBasis {
            degree,
            interior,
            lower,
            upper,
            knots: Vec::new(),
        };
        basis.knots = basis.clamped_knots();
        Ok(basis)
    }

    /// `m` equally spaced interior knots on `[lower, upper]`.
    pub fn equally_spaced(degree: usize, m: usize, lower: f64, upper: f64) -> Result<Self> {
        let step = (upper - lower) / (m + 1) as f64;
        let interior = (1..=m).map(|j| lower + step * j as f64).collect();
        Self::new(degree, interior, lower, upper)
    }

    /// Default basis for a set of censoring intervals: `[0, U]` with `U`
    /// slightly above the largest finite endpoint.
    pub fn for_intervals(degree: usize, m: usize, intervals: &[CensoringInterval]) -> Result<Self> {
        let max_finite = intervals
            .iter()
            .flat_map(|i| [i.left, i.right])
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max);
        if max_finite <= 0.0 {
            return Err(Error::InvalidInput(
                "no positive finite interval endpoint to place spline knots".into(),
            ));
        }
        Self::equally_spaced(degree, m, 0.0, max_finite * UPPER_INFLATION)
    }

    fn clamped_knots(&self) -> Vec<f64> {
        let reps = self.degree + 1;
        let mut t = Vec::with_capacity(self.interior.len() + 2 * reps);
        t.extend(std::iter::repeat_n(self.lower, reps));
        t.extend_from_slice(&self.interior);
        t.extend(std::iter::repeat_n(self.upper, reps));
        t
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn boundary(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    /// Basis dimension `K`.
    pub fn dim(&self) -> usize {
        self.interior.len() + self.degree
    }

    fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Index `s` with `t[s] <= x < t[s+1]`, clamped to the last nonempty
    /// span so that `x == upper` evaluates as a left limit.
    fn span(&self, x: f64) -> usize {
        let t = self.knots();
        let last = t.len() - self.degree - 2;
        let s = t.partition_point(|&k| k <= x).saturating_sub(1);
        s.min(last).max(self.degree)
    }

    /// Nonzero B-splines of `order` at `x` in span `s`: entry `r` is
    /// `B_{s - order + 1 + r}`.
    fn local_bsplines(&self, order: usize, s: usize, x: f64) -> Vec<f64> {
        let t = self.knots();
        let mut b = vec![0.0; order];
        b[0] = 1.0;
        for k in 1..order {
            // Raise from order k to k + 1.
            let mut saved = 0.0;
            for r in 0..k {
                let left = t[s + 1 + r - k];
                let right = t[s + 1 + r];
                let term = if right > left { b[r] / (right - left) } else { 0.0 };
                b[r] = saved + (right - x) * term;
                saved = (x - left) * term;
            }
            b[k] = saved;
        }
        b
    }

    /// M-spline values; zero outside `[lower, upper]`.
    pub fn mspline(&self, v: f64) -> Vec<f64> {
        let k = self.dim();
        let mut out = vec![0.0; k];
        if !(v >= self.lower && v <= self.upper) {
            return out;
        }
        let d = self.degree;
        let t = self.knots();
        let s = self.span(v);
        let local = self.local_bsplines(d, s, v);
        // local[r] is B^{(d)}_{s-d+1+r}; basis member i (1-based over the
        // clamped vector) sits at output index i - 1.
        for (r, &b) in local.iter().enumerate() {
            let i = s + 1 + r - d;
            if i == 0 || i > k {
                continue;
            }
            let width = t[i + d] - t[i];
            if width > 0.0 {
                out[i - 1] = d as f64 * b / width;
            }
        }
        out
    }

    /// I-spline values in `[0, 1]`: zero at or below `lower`, one at or
    /// above `upper`.
    pub fn ispline(&self, v: f64) -> Vec<f64> {
        let k = self.dim();
        if v <= self.lower {
            return vec![0.0; k];
        }
        if v >= self.upper {
            return vec![1.0; k];
        }
        let d = self.degree;
        let s = self.span(v);
        let local = self.local_bsplines(d + 1, s, v);
        // local[r] is B^{(d+1)}_{s-d+r}; I_i = sum_{j >= i} B^{(d+1)}_j.
        let first = s - d;
        let mut out = vec![0.0; k];
        let mut tail = 0.0;
        for i in (1..=k).rev() {
            if i >= first && i - first < local.len() {
                tail += local[i - first];
            }
            out[i - 1] = if i <= first { 1.0 } else { tail.clamp(0.0, 1.0) };
        }
        out
    }

    /// `sum_k alpha_k I_k(v)`.
    pub fn cumulative(&self, alpha: &[f64], v: f64) -> f64 {
        debug_assert_eq!(alpha.len(), self.dim());
        if v <= self.lower {
            return 0.0;
        }
        self.ispline(v).iter().zip(alpha).map(|(b, a)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Composite Gauss-Legendre on a fine partition split at the knots,
    /// exact for the piecewise polynomials involved.
    fn integrate_mspline(basis: &SplineBasis, v: f64) -> Vec<f64> {
        let (lo, _) = basis.boundary();
        let mut breaks = vec![lo];
        breaks.extend(basis.interior_knots().iter().copied().filter(|&k| k < v));
        breaks.push(v);
        let nodes = [
            (-0.906_179_845_938_664, 0.236_926_885_056_189),
            (-0.538_469_310_105_683, 0.478_628_670_499_366),
            (0.0, 0.568_888_888_888_889),
            (0.538_469_310_105_683, 0.478_628_670_499_366),
            (0.906_179_845_938_664, 0.236_926_885_056_189),
        ];
        let mut acc = vec![0.0; basis.dim()];
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for &(x, wt) in &nodes {
                let m = basis.mspline(mid + half * x);
                for (acc_k, m_k) in acc.iter_mut().zip(&m) {
                    *acc_k += wt * half * m_k;
                }
            }
        }
        acc
    }

    #[test]
    fn outside_support() {
        let b = SplineBasis::equally_spaced(2, 3, 0.0, 4.0).unwrap();
        assert_eq!(b.dim(), 5);
        assert!(b.mspline(-0.1).iter().all(|&x| x == 0.0));
        assert!(b.mspline(4.1).iter().all(|&x| x == 0.0));
        assert!(b.ispline(0.0).iter().all(|&x| x == 0.0));
        assert!(b.ispline(-1.0).iter().all(|&x| x == 0.0));
        assert!(b.ispline(4.0).iter().all(|&x| x == 1.0));
        assert!(b.ispline(7.0).iter().all(|&x| x == 1.0));
    }

    #[test]
    fn linear_single_span_is_uniform_density() {
        let b = SplineBasis::new(1, vec![], 1.0, 3.0).unwrap();
        assert_eq!(b.dim(), 1);
        assert_abs_diff_eq!(b.mspline(1.7)[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b.ispline(2.0)[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn mspline_matches_derivative_of_ispline() {
        let b = SplineBasis::equally_spaced(2, 4, 0.0, 5.0).unwrap();
        let h = 1e-6;
        for &v in &[0.3, 1.1, 2.2, 3.9, 4.7] {
            let up = b.ispline(v + h);
            let dn = b.ispline(v - h);
            let m = b.mspline(v);
            for k in 0..b.dim() {
                assert_abs_diff_eq!((up[k] - dn[k]) / (2.0 * h), m[k], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn ispline_matches_quadrature_of_mspline() {
        for degree in 1..=3 {
            let b = SplineBasis::equally_spaced(degree, 5, 0.0, 5.0).unwrap();
            for &v in &[0.05, 0.9, 1.7, 2.5, 3.33, 4.99] {
                let quad = integrate_mspline(&b, v);
                let direct = b.ispline(v);
                for k in 0..b.dim() {
                    assert_abs_diff_eq!(quad[k], direct[k], epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn msplines_integrate_to_one() {
        let b = SplineBasis::new(3, vec![0.5, 1.5, 1.6, 3.0], 0.0, 4.0).unwrap();
        let total = integrate_mspline(&b, 4.0);
        for t in total {
            assert_abs_diff_eq!(t, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn interval_default_boundary() {
        let iv = [
            CensoringInterval::new(0.0, 2.0).unwrap(),
            CensoringInterval::new(3.0, f64::INFINITY).unwrap(),
        ];
        let b = SplineBasis::for_intervals(2, 5, &iv).unwrap();
        assert_eq!(b.boundary(), (0.0, 3.0 * UPPER_INFLATION));
        assert_eq!(b.dim(), 7);
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(SplineBasis::new(0, vec![], 0.0, 1.0).is_err());
        assert!(SplineBasis::new(2, vec![0.5, 0.4], 0.0, 1.0).is_err());
        assert!(SplineBasis::new(2, vec![1.0], 0.0, 1.0).is_err());
        assert!(SplineBasis::new(2, vec![], 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn nonnegative_combinations_are_monotone(
            alpha in prop::collection::vec(0.0f64..3.0, 7),
            a in 0.0f64..5.0,
            b in 0.0f64..5.0,
        ) {
            let basis = SplineBasis::equally_spaced(2, 5, 0.0, 5.0).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(basis.cumulative(&alpha, lo) <= basis.cumulative(&alpha, hi) + 1e-12);
            prop_assert_eq!(basis.cumulative(&alpha, 0.0), 0.0);
        }
    }
}
