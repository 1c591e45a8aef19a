//! Bridges between `ndarray` storage and the dense `faer` solvers.
//!
//! Everything here is a thin adapter: symmetric eigendecomposition with
//! eigenvalues reordered to descending, Cholesky with triangular solves, and
//! a positive-definite linear solve for normal equations.

use crate::error::{MfpcaError, Result};
use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use ndarray::{Array1, Array2};

pub(crate) fn to_faer(a: &Array2<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_faer(m: faer::MatRef<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigendecomposition of a symmetric matrix; eigenvalues in descending order,
/// eigenvectors in the matching columns.
pub(crate) fn sym_eigen_desc(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(MfpcaError::EigenFailure(format!(
            "matrix is {}x{}, expected square",
            a.nrows(),
            a.ncols()
        )));
    }
    let m = to_faer(a);
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| MfpcaError::EigenFailure(format!("symmetric eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut values = Array1::zeros(n);
    let mut vectors = Array2::zeros((n, n));
    for k in 0..n {
        let src = n - 1 - k;
        values[k] = s[src];
        for i in 0..n {
            vectors[[i, k]] = u[(i, src)];
        }
    }
    Ok((values, vectors))
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub(crate) fn chol_lower(a: &Array2<f64>) -> Result<Array2<f64>> {
    let llt = to_faer(a).llt(Side::Lower).map_err(|_| MfpcaError::SingularSystem {
        op: "cholesky",
        hint: "matrix is not positive definite".into(),
    })?;
    Ok(from_faer(llt.L()))
}

/// Solves `L x = b` in place for a lower-triangular `L` (forward substitution),
/// with `b` given row-wise as an ndarray matrix.
pub(crate) fn solve_lower_in_place(l: &Array2<f64>, b: &mut Array2<f64>) {
    let lf = to_faer(l);
    let mut bf = to_faer(b);
    lf.as_ref().solve_lower_triangular_in_place(bf.as_mut());
    b.assign(&from_faer(bf.as_ref()));
}

/// Solves the positive-definite system `A x = b` via Cholesky.
pub(crate) fn solve_spd(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let llt = to_faer(a).llt(Side::Lower).map_err(|_| MfpcaError::SingularSystem {
        op: "spd_solve",
        hint: "matrix is not positive definite".into(),
    })?;
    let mut bf = to_faer(b);
    llt.solve_in_place(bf.as_mut());
    Ok(from_faer(bf.as_ref()))
}
