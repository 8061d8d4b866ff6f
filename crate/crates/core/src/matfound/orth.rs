use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matfound::SkewMatrix;

/// Tolerance on `‖QᵀQ − I‖_F` accepted for an orthonormal-column matrix.
pub const ORTHO_TOL: f64 = 1e-10;

/// `rows × cols` matrix with orthonormal columns, `rows ≥ cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalMatrix {
    data: DMatrix<f64>,
}

impl OrthogonalMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < data.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "orthonormal columns need rows >= cols, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        let k = data.ncols();
        let err = (data.transpose() * &data - DMatrix::<f64>::identity(k, k)).norm();
        if !(err <= ORTHO_TOL) {
            return Err(Error::DomainError(format!("columns not orthonormal (error {err:.3e})")));
        }
        Ok(Self { data })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            data: DMatrix::identity(n, n),
        }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// First `k` columns.
    pub fn leading_columns(&self, k: usize) -> DMatrix<f64> {
        self.data.columns(0, k).into_owned()
    }
}

/// Cayley map `E (I − S)(I + S)⁻¹` with `E = diag(signs)`, each sign ±1.
pub fn cayley(s: &SkewMatrix, signs: &[f64]) -> Result<OrthogonalMatrix> {
    let n = s.dim();
    if signs.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} signs for a {n}x{n} Cayley transform",
            signs.len()
        )));
    }
    if signs.iter().any(|&e| e != 1.0 && e != -1.0) {
        return Err(Error::DomainError("sign entries must be +1 or -1".into()));
    }
    let sm = s.matrix();
    let eye = DMatrix::<f64>::identity(n, n);
    // (I − S) and (I + S)⁻¹ commute, so solve (I + S) X = (I − S).
    let lu = (&eye + &sm).lu();
    let mut x = lu
        .solve(&(&eye - &sm))
        .ok_or_else(|| Error::NumericalFailure("I + S singular".into()))?;
    for (i, &e) in signs.iter().enumerate() {
        if e < 0.0 {
            x.row_mut(i).neg_mut();
        }
    }
    Ok(OrthogonalMatrix { data: x })
}

/// Inverse Cayley map for `E = I`: the skew `S` with `(I − S)(I + S)⁻¹ = U`.
pub fn inverse_cayley(u: &DMatrix<f64>) -> Result<SkewMatrix> {
    let n = u.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let lu = (&eye + u).lu();
    let s = lu
        .solve(&(&eye - u))
        .ok_or_else(|| Error::DomainError("orthogonal matrix has eigenvalue -1".into()))?;
    Ok(SkewMatrix::project(&s))
}

/// Orthonormal factor of a thin Householder QR, signs fixed so that `R` has a
/// positive diagonal.
pub fn qr_orthonormal(x: &DMatrix<f64>) -> Result<OrthogonalMatrix> {
    let (rows, cols) = x.shape();
    if rows < cols || cols == 0 {
        return Err(Error::DimensionMismatch(format!("QR of {rows}x{cols} needs rows >= cols >= 1")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::DomainError("non-finite entries in QR input".into()));
    }
    let scale = x.norm().max(f64::MIN_POSITIVE);
    let qr = x.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..cols {
        let d = r[(j, j)];
        if d.abs() < 1e-12 * scale {
            return Err(Error::RankDeficient);
        }
        if d < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(OrthogonalMatrix { data: q })
}
