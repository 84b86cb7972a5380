//! Small dense-matrix helpers around nalgebra.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Cholesky factorization of a symmetric positive definite matrix.
pub fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if !m.is_square() || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularCovariance);
    }
    Cholesky::new(m.clone()).ok_or(Error::SingularCovariance)
}
