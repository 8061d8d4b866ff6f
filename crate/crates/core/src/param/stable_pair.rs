use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfound::{
    lower_inverse, rows_serde, solve_gen_lyapunov, SkewMatrix, SpdMatrix,
};

/// Tolerance on the symmetric part of the recovered skew matrix, relative to
/// the magnitude of the matrices it is computed from.
pub const SKEW_TOL: f64 = 1e-8;

/// How the Lyapunov right-hand side `Q` is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum QMode {
    /// Deterministic `Q`.
    Fixed(SpdMatrix),
    /// `Q` drawn at random alongside the other parameters.
    Random(SpdMatrix),
    /// `Q = αP` with decay rate `α > 0`.
    AlphaP(f64),
}

impl QMode {
    /// `Q` given `P⁻¹`.
    pub fn resolve(&self, p_inv: &SpdMatrix) -> Result<SpdMatrix> {
        match self {
            QMode::Fixed(q) | QMode::Random(q) => Ok(q.clone()),
            QMode::AlphaP(alpha) => p_inv.inverse()?.scaled(*alpha),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            QMode::Fixed(q) | QMode::Random(q) if q.dim() != n => Err(Error::DimensionMismatch(
                format!("Q is {0}x{0}, expected {n}x{n}", q.dim()),
            )),
            QMode::AlphaP(a) if !(*a > 0.0) || !a.is_finite() => {
                Err(Error::DomainError(format!("alpha = {a} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Free parameters generating a mean-square stable `(A, F)`:
/// `A = −½P⁻¹(Q + F̃ᵀF̃ + S)`, `F = L_{P⁻¹}F̃`.
///
/// `P` is carried through its inverse, whose Cholesky factor `L_{P⁻¹}` is
/// what both the map and the Bartlett sampler work with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StablePairParams {
    pub p_inv: SpdMatrix,
    #[serde(with = "rows_serde")]
    pub ftil: DMatrix<f64>,
    pub s: SkewMatrix,
    pub qmode: QMode,
}

impl StablePairParams {
    pub fn dim(&self) -> usize {
        self.p_inv.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.ftil.shape() != (n, n) || self.s.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "F̃ {:?} and S {} must match P dimension {n}",
                self.ftil.shape(),
                self.s.dim()
            )));
        }
        self.qmode.validate(n)
    }

    /// Resolved `Q`.
    pub fn q(&self) -> Result<SpdMatrix> {
        self.qmode.resolve(&self.p_inv)
    }

    /// The certificate `P`.
    pub fn p(&self) -> Result<SpdMatrix> {
        self.p_inv.inverse()
    }
}

/// `−½P⁻¹(Q + extra + S)`; for `Q = αP` the `P⁻¹Q` product is taken as `αI` exactly.
pub(crate) fn drift_matrix(
    p_inv: &SpdMatrix,
    qmode: &QMode,
    extra_sym: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = p_inv.dim();
    Ok(match qmode {
        QMode::AlphaP(alpha) => {
            (DMatrix::<f64>::identity(n, n) * *alpha + p_inv.matrix() * (extra_sym + s)) * -0.5
        }
        QMode::Fixed(q) | QMode::Random(q) => p_inv.matrix() * (q.matrix() + extra_sym + s) * -0.5,
    })
}

/// `(A, F)` from stable-pair parameters.
pub fn stable_pair_from_params(p: &StablePairParams) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    p.validate()?;
    let ftf = p.ftil.transpose() * &p.ftil;
    let a = drift_matrix(&p.p_inv, &p.qmode, &ftf, &p.s.matrix())?;
    let f = p.p_inv.chol() * &p.ftil;
    Ok((a, f))
}

/// Recovers parameters of a stable pair for a chosen `Q`.
///
/// Fails with `UnstablePair` when the generalized Lyapunov solution is not
/// positive definite (or does not exist).
pub fn params_from_stable_pair(
    a: &DMatrix<f64>,
    f: &DMatrix<f64>,
    q: &SpdMatrix,
) -> Result<StablePairParams> {
    let p = match solve_gen_lyapunov(a, f, q) {
        Ok(p) => p,
        Err(Error::SingularSystem) => return Err(Error::UnstablePair),
        Err(e) => return Err(e),
    };
    let p = SpdMatrix::new(&p).map_err(|_| Error::UnstablePair)?;
    let p_inv = p.inverse()?;
    let ftil = lower_inverse(p_inv.chol()) * f;
    let ftf = ftil.transpose() * &ftil;
    let pa = p.matrix() * a;
    let s_full = -(&pa * 2.0 + q.matrix() + &ftf);
    let s = checked_skew(&s_full, pa.norm() + q.matrix().norm() + ftf.norm())?;
    Ok(StablePairParams {
        p_inv,
        ftil,
        s,
        qmode: QMode::Fixed(q.clone()),
    })
}

/// Skew projection of `m` after checking its symmetric part is negligible.
pub(crate) fn checked_skew(m: &DMatrix<f64>, scale: f64) -> Result<SkewMatrix> {
    let sym = (m + m.transpose()) * 0.5;
    let residual = sym.norm();
    let tol = SKEW_TOL * scale.max(1.0);
    if !(residual <= tol) {
        return Err(Error::AsymmetryTooLarge { residual, tol });
    }
    Ok(SkewMatrix::project(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matfound::{is_mean_square_stable, lyapunov_residual};
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_forward_map() {
        // P = 2, Q = 1, F̃ = 1, S = 0  ⇒  A = −½·½·2 = −0.5, F = √0.5.
        let params = StablePairParams {
            p_inv: SpdMatrix::new(&scalar(0.5)).unwrap(),
            ftil: scalar(1.0),
            s: SkewMatrix::zeros(1),
            qmode: QMode::Fixed(SpdMatrix::identity(1)),
        };
        let (a, f) = stable_pair_from_params(&params).unwrap();
        assert_relative_eq!(a[(0, 0)], -0.5, epsilon = 1e-15);
        assert_relative_eq!(f[(0, 0)], 0.5_f64.sqrt(), epsilon = 1e-15);
        // 2AP + F²P = −1.
        assert_relative_eq!(2.0 * a[(0, 0)] * 2.0 + f[(0, 0)].powi(2) * 2.0, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn identity_forward_and_inverse() {
        let q = SpdMatrix::scaled_identity(2, 2.0);
        let params = StablePairParams {
            p_inv: SpdMatrix::identity(2),
            ftil: DMatrix::zeros(2, 2),
            s: SkewMatrix::zeros(2),
            qmode: QMode::Fixed(q.clone()),
        };
        let (a, f) = stable_pair_from_params(&params).unwrap();
        assert!((&a + DMatrix::<f64>::identity(2, 2)).norm() < 1e-15);
        assert_eq!(f, DMatrix::zeros(2, 2));

        let back = params_from_stable_pair(&a, &f, &q).unwrap();
        assert!((back.p_inv.matrix() - DMatrix::<f64>::identity(2, 2)).norm() < 1e-14);
        assert!(back.ftil.norm() < 1e-14);
        assert!(back.s.packed().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn scalar_inverse_map() {
        let back = params_from_stable_pair(&scalar(-0.5), &scalar(0.5_f64.sqrt()), &SpdMatrix::identity(1)).unwrap();
        assert_relative_eq!(back.p().unwrap().matrix()[(0, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(back.ftil[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn unstable_pair_is_rejected() {
        let r = params_from_stable_pair(&scalar(0.5), &scalar(0.0), &SpdMatrix::identity(1));
        assert_eq!(r, Err(Error::UnstablePair));
        let r = params_from_stable_pair(&scalar(-1.0), &scalar(2.0_f64.sqrt()), &SpdMatrix::identity(1));
        assert_eq!(r, Err(Error::UnstablePair));
    }

    #[test]
    fn alpha_p_mode_satisfies_lyapunov_with_alpha_p() {
        let p_inv = SpdMatrix::new(&DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let params = StablePairParams {
            p_inv: p_inv.clone(),
            ftil: DMatrix::from_row_slice(2, 2, &[0.4, -0.2, 1.0, 0.3]),
            s: SkewMatrix::from_packed(2, vec![0.7]).unwrap(),
            qmode: QMode::AlphaP(1.5),
        };
        let (a, f) = stable_pair_from_params(&params).unwrap();
        let p = params.p().unwrap();
        let q = params.q().unwrap();
        assert!((q.matrix() - p.matrix() * 1.5).norm() < 1e-12);
        assert!(lyapunov_residual(&a, &f, p.matrix(), q.matrix()).norm() < 1e-12);
        assert!(is_mean_square_stable(&a, &f).unwrap().stable);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let params = StablePairParams {
            p_inv: SpdMatrix::identity(2),
            ftil: DMatrix::zeros(3, 3),
            s: SkewMatrix::zeros(2),
            qmode: QMode::AlphaP(1.0),
        };
        assert!(matches!(stable_pair_from_params(&params), Err(Error::DimensionMismatch(_))));
        let params = StablePairParams {
            ftil: DMatrix::zeros(2, 2),
            qmode: QMode::AlphaP(-1.0),
            ..params
        };
        assert!(matches!(stable_pair_from_params(&params), Err(Error::DomainError(_))));
    }
}
