use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative symmetry tolerance for covariance inputs.
pub const SYMMETRY_RTOL: f64 = 1e-12;

pub fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::invalid(format!("{what} is not square")));
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                return Err(Error::invalid(format!("{what} is not symmetric")));
            }
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} has non-finite entries")));
    }
    Ok(())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Lower-triangular factor `L` with `m = L Lᵀ`.
pub fn cholesky_lower(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.unpack()).ok_or_else(|| Error::DegenerateCovariance(what.to_string()))
}

/// `log det` from a Cholesky factor.
pub fn log_det_from_lower(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Solves `L y = b` for lower-triangular `L`.
pub fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.solve_lower_triangular(b).expect("cholesky factor has a positive diagonal")
}

pub fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::invalid(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Block-diagonal stacking of square blocks.
#[cfg(test)]
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(*b);
        off += k;
    }
    out
}
