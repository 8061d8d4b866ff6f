//! Dense small-matrix foundations: SPD and skew-symmetric containers,
//! generalized Lyapunov solves, stability tests and orthogonal-matrix
//! constructions.
//!
//! Everything here is a pure function of its inputs. Matrices are small
//! (the Lyapunov solve is a dense `n² × n²` system), so nothing is sparse.

mod lyapunov;
mod orth;
mod skew;
mod spd;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub use lyapunov::{
    eigenvalues, is_mean_square_stable, lyapunov_residual, moment_operator, solve_gen_lyapunov,
    solve_gen_lyapunov_with_cap, spectral_abscissa, MeanSquareStability, DEFAULT_DIM_CAP,
};
pub use orth::{cayley, inverse_cayley, qr_orthonormal, OrthogonalMatrix, ORTHO_TOL};
pub use skew::{skew_len, SkewMatrix};
pub use spd::{cholesky_lower, is_positive_definite, lower_inverse, symmetrize, SpdMatrix, DEFAULT_PD_TOL};

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_eig_sym(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch("max_eig_sym needs a square matrix".into()));
    }
    if m.nrows() == 0 {
        return Err(Error::DimensionMismatch("max_eig_sym of an empty matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite entries".into()));
    }
    let eig = SymmetricEigen::try_new(symmetrize(m), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolver did not converge".into()))?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// `m × n` matrix with `values[i]` at `(i, i)` and zeros elsewhere.
pub fn rect_diag(m: usize, n: usize, values: &[f64]) -> Result<DMatrix<f64>> {
    if values.len() != m.min(n) {
        return Err(Error::DimensionMismatch(format!(
            "rect_diag({m}, {n}) needs {} values, got {}",
            m.min(n),
            values.len()
        )));
    }
    let mut out = DMatrix::zeros(m, n);
    for (i, &v) in values.iter().enumerate() {
        out[(i, i)] = v;
    }
    Ok(out)
}

/// Row-major nested representation used by every serialized matrix.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Inverse of [`to_rows`]. An empty outer list yields a `0 × 0` matrix.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Row-major serde adapter for `DMatrix<f64>` fields.
pub mod rows_serde {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}
