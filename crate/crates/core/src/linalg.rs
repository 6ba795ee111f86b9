//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = Vec<Vec<f64>>;

pub fn to_dmatrix(m: &[Vec<f64>]) -> DMatrix<f64> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows, cols, |i, j| m[i][j])
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Matrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn zeros(rows: usize, cols: usize) -> Matrix {
    vec![vec![0.0; cols]; rows]
}

/// 2-norm condition number of a symmetric matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| {
            (lo.min(e.abs()), hi.max(e.abs()))
        });
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Inverse of a symmetric positive-definite matrix, rejecting numerically
/// singular input.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let cond = condition_number(m);
    if !(cond.is_finite() && cond < 1e12) {
        return Err(Error::Singular {
            what: what.to_string(),
            condition: cond,
        });
    }
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular {
            what: what.to_string(),
            condition: cond,
        })
}

/// Inverse of a general square matrix with a condition-number guard.
pub fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let sv = m.clone().svd(false, false).singular_values;
    let (lo, hi) = sv
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let cond = if lo == 0.0 { f64::INFINITY } else { hi / lo };
    if !(cond.is_finite() && cond < 1e12) {
        return Err(Error::Singular {
            what: what.to_string(),
            condition: cond,
        });
    }
    m.clone().try_inverse().ok_or_else(|| Error::Singular {
        what: what.to_string(),
        condition: cond,
    })
}

/// Solves `(A + mu I) x = b` for symmetric positive-definite `A + mu I`,
/// increasing `mu` until the Cholesky factorization succeeds. `None` when
/// `A` or `b` has a non-finite entry, which no shift can repair.
pub fn damped_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(1e-12, f64::max);
    let mut mu = 0.0;
    loop {
        let shifted = a + DMatrix::identity(n, n) * mu;
        if let Some(ch) = shifted.cholesky() {
            return Some(ch.solve(b));
        }
        mu = if mu == 0.0 { 1e-10 * scale } else { mu * 10.0 };
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
