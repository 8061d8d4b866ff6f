use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::matfound::{from_rows, max_eig_sym, to_rows};

/// Relative pivot tolerance of the positive-definiteness test: a Cholesky
/// pivot must exceed `tol * max|diag|`.
pub const DEFAULT_PD_TOL: f64 = 1e-12;

/// Lower Cholesky factor of the symmetric matrix whose lower triangle is `m`.
///
/// Fails with `NotPositiveDefinite` when a pivot is not larger than
/// `rel_tol * max|diag(m)|`.
pub fn cholesky_lower(m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch(format!("Cholesky of {}x{} matrix", n, m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    let floor = rel_tol * scale;
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) || d <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Positive-definiteness test by attempted Cholesky factorization.
pub fn is_positive_definite(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    cholesky_lower(&symmetrize(m), rel_tol).is_ok()
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse of a lower-triangular matrix with non-zero diagonal.
pub fn lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    l.solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("lower factor with non-zero diagonal")
}

/// Symmetric positive-definite matrix carried together with its lower
/// Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    data: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl SpdMatrix {
    /// Builds from the lower triangle of `m`, mirroring it to enforce exact symmetry.
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(m, DEFAULT_PD_TOL)
    }

    pub fn with_tolerance(m: &DMatrix<f64>, rel_tol: f64) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "SPD matrix must be square and non-empty, got {}x{}",
                n,
                m.ncols()
            )));
        }
        let chol = cholesky_lower(m, rel_tol)?;
        let mut data = m.clone();
        for j in 0..n {
            for i in (j + 1)..n {
                data[(j, i)] = data[(i, j)];
            }
        }
        Ok(Self { data, chol })
    }

    /// Builds `L Lᵀ` from a lower-triangular factor with positive diagonal.
    pub fn from_cholesky(l: DMatrix<f64>) -> Result<Self> {
        let n = l.nrows();
        if n == 0 || l.ncols() != n {
            return Err(Error::DimensionMismatch("Cholesky factor must be square".into()));
        }
        for i in 0..n {
            if !(l[(i, i)] > 0.0) || !l[(i, i)].is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            for j in (i + 1)..n {
                if l[(i, j)] != 0.0 {
                    return Err(Error::DomainError("Cholesky factor must be lower triangular".into()));
                }
            }
        }
        if l.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let mut data = &l * l.transpose();
        for j in 0..n {
            for i in (j + 1)..n {
                data[(j, i)] = data[(i, j)];
            }
        }
        Ok(Self { data, chol: l })
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    /// `s · I`, `s > 0`.
    pub fn scaled_identity(n: usize, s: f64) -> Self {
        assert!(s > 0.0, "scaled identity needs a positive scale");
        Self {
            data: DMatrix::identity(n, n) * s,
            chol: DMatrix::identity(n, n) * s.sqrt(),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Lower Cholesky factor.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// `s · self` for `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::DomainError(format!("scale {s} must be positive")));
        }
        Ok(Self {
            data: &self.data * s,
            chol: &self.chol * s.sqrt(),
        })
    }

    /// Inverse, computed as `L⁻ᵀ L⁻¹`.
    pub fn inverse(&self) -> Result<Self> {
        let linv = lower_inverse(&self.chol);
        let inv = linv.transpose() * &linv;
        Self::new(&inv).map_err(|_| Error::CholeskyFailure)
    }

    /// Solves `self · X = B`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self
            .chol
            .solve_lower_triangular(b)
            .expect("positive diagonal");
        self.chol
            .transpose()
            .solve_upper_triangular(&y)
            .expect("positive diagonal")
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        max_eig_sym(&self.data)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(-max_eig_sym(&(-&self.data))?)
    }

    /// `λ_max / λ_min`.
    pub fn condition_number(&self) -> Result<f64> {
        Ok(self.max_eigenvalue()? / self.min_eigenvalue()?)
    }

    /// `log det`, via the Cholesky diagonal.
    pub fn ln_det(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

impl Serialize for SpdMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(&self.data).serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpdMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let m = from_rows(&rows).map_err(serde::de::Error::custom)?;
        SpdMatrix::new(&m).map_err(serde::de::Error::custom)
    }
}
