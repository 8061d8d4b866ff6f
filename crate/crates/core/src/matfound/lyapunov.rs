use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{Error, Result};
use crate::matfound::{symmetrize, SpdMatrix};

/// Default cap on `n` for the dense `n² × n²` Kronecker solve.
pub const DEFAULT_DIM_CAP: usize = 64;

/// Relative pivot threshold below which the Kronecker system is declared singular.
const SINGULAR_TOL: f64 = 1e-13;

fn check_square(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "{name} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Natural magnitude of the generalized Lyapunov operator, `2‖A‖_F + ‖F‖_F²`.
fn operator_scale(a: &DMatrix<f64>, f: &DMatrix<f64>) -> f64 {
    2.0 * a.norm() + f.norm_squared()
}

/// Solves `AᵀP + PA + FᵀPF = −Q` through the vectorized system
/// `(I ⊗ Aᵀ + Aᵀ ⊗ I + Fᵀ ⊗ Fᵀ) vec(P) = −vec(Q)`.
///
/// The result is symmetrized. It is positive definite iff `(A, F)` is a
/// mean-square stable pair; the caller decides what to do otherwise.
pub fn solve_gen_lyapunov(a: &DMatrix<f64>, f: &DMatrix<f64>, q: &SpdMatrix) -> Result<DMatrix<f64>> {
    solve_gen_lyapunov_with_cap(a, f, q.matrix(), DEFAULT_DIM_CAP)
}

/// As [`solve_gen_lyapunov`], for any symmetric right-hand side and an explicit cap.
pub fn solve_gen_lyapunov_with_cap(
    a: &DMatrix<f64>,
    f: &DMatrix<f64>,
    q: &DMatrix<f64>,
    cap: usize,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    check_square("A", a, n)?;
    check_square("F", f, n)?;
    check_square("Q", q, n)?;
    if n > cap {
        return Err(Error::TooLarge { n, cap });
    }
    let at = a.transpose();
    let ft = f.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let k = eye.kronecker(&at) + at.kronecker(&eye) + ft.kronecker(&ft);
    let lu = k.lu();
    let u = lu.u();
    let floor = SINGULAR_TOL * operator_scale(a, f).max(f64::MIN_POSITIVE);
    if (0..n * n).any(|i| !(u[(i, i)].abs() > floor)) {
        return Err(Error::SingularSystem);
    }
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let x = lu.solve(&rhs).ok_or(Error::SingularSystem)?;
    let p = DMatrix::from_column_slice(n, n, x.as_slice());
    Ok(symmetrize(&p))
}

/// `AᵀP + PA + FᵀPF + Q`.
pub fn lyapunov_residual(a: &DMatrix<f64>, f: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * p + p * a + f.transpose() * p * f + q
}

/// Generator of the second-moment dynamics `Σ ↦ AΣ + ΣAᵀ + FΣFᵀ` acting on
/// `vec(Σ)`: `I ⊗ A + A ⊗ I + F ⊗ F`.
pub fn moment_operator(a: &DMatrix<f64>, f: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    eye.kronecker(a) + a.kronecker(&eye) + f.kronecker(f)
}

/// Verdict of the moment-operator stability test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSquareStability {
    pub stable: bool,
    /// Largest real part among the moment-operator eigenvalues.
    pub abscissa: f64,
}

/// Mean-square stability of `dx = Ax dt + Fx dw`: the moment operator must be Hurwitz.
pub fn is_mean_square_stable(a: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<MeanSquareStability> {
    let n = a.nrows();
    check_square("A", a, n)?;
    check_square("F", f, n)?;
    let abscissa = spectral_abscissa(&moment_operator(a, f))?;
    Ok(MeanSquareStability {
        stable: abscissa < 0.0,
        abscissa,
    })
}

/// Largest real part of the eigenvalues of a square matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Complex eigenvalues of a real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<nalgebra::Complex<f64>>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite matrix entries".into()));
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::NumericalFailure("Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}
