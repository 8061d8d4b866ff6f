use nalgebra::{Complex, DMatrix, DVector};

use crate::error::Result;
use crate::matfound::{eigenvalues, SpdMatrix, SkewMatrix};

/// One eigenpair's agreement with the Rayleigh-quotient expressions
/// `Re λ = −v†(Q + F̃ᵀF̃)v / 2v†Pv` and `Im λ = −v†Sv / 2i·v†Pv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigResidual {
    pub lambda: Complex<f64>,
    pub residual_re: f64,
    pub residual_im: f64,
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    m.map(|v| Complex::new(v, 0.0))
}

/// Eigenvector for an approximate eigenvalue by shifted inverse iteration.
fn eigenvector(a: &DMatrix<Complex<f64>>, lambda: Complex<f64>) -> DVector<Complex<f64>> {
    let n = a.nrows();
    let scale = a.norm().max(1.0);
    let mut shift = lambda + Complex::new(1e-10, 1e-10) * scale;
    let mut v = DVector::from_fn(n, |i, _| Complex::new(1.0 + 0.37 * i as f64, 0.11 * i as f64));
    v /= Complex::new(v.norm(), 0.0);
    for attempt in 0..4 {
        let m = a - DMatrix::<Complex<f64>>::identity(n, n) * shift;
        let lu = m.lu();
        let mut ok = true;
        for _ in 0..4 {
            match lu.solve(&v) {
                Some(w) if w.iter().all(|z| z.re.is_finite() && z.im.is_finite()) && w.norm() > 0.0 => {
                    v = &w / Complex::new(w.norm(), 0.0);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            break;
        }
        shift += Complex::new(1e-8, 1e-8) * scale * (attempt as f64 + 1.0);
    }
    v
}

/// `v† M v` for a real matrix.
fn quad(v: &DVector<Complex<f64>>, m: &DMatrix<f64>) -> Complex<f64> {
    (v.adjoint() * to_complex(m) * v)[(0, 0)]
}

/// Rayleigh-quotient check of the spectrum of `A` against its generating parameters.
///
/// `q_res` is the resolved `Q` (for BRL parameters pass `Q + CᵀC`).
pub fn eig_structure_check(
    a: &DMatrix<f64>,
    p: &SpdMatrix,
    q_res: &DMatrix<f64>,
    ftil: &DMatrix<f64>,
    s: &SkewMatrix,
) -> Result<Vec<EigResidual>> {
    let ac = to_complex(a);
    let sym = q_res + ftil.transpose() * ftil;
    let sm = s.matrix();
    let mut out = Vec::new();
    for lambda in eigenvalues(a)? {
        let v = eigenvector(&ac, lambda);
        let vpv = quad(&v, p.matrix()).re;
        let re = -quad(&v, &sym).re / (2.0 * vpv);
        // v†Sv is purely imaginary for real skew S.
        let im = -quad(&v, &sm).im / (2.0 * vpv);
        out.push(EigResidual {
            lambda,
            residual_re: (lambda.re - re).abs(),
            residual_im: (lambda.im - im).abs(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::stable_pair::{stable_pair_from_params, QMode, StablePairParams};

    #[test]
    fn identity_case_has_zero_residuals() {
        let a = -DMatrix::<f64>::identity(3, 3);
        let r = eig_structure_check(&a, &SpdMatrix::identity(3), &(DMatrix::identity(3, 3) * 2.0), &DMatrix::zeros(3, 3), &SkewMatrix::zeros(3)).unwrap();
        assert_eq!(r.len(), 3);
        for e in r {
            assert!((e.lambda.re + 1.0).abs() < 1e-14);
            assert!(e.residual_re < 1e-12 && e.residual_im < 1e-12);
        }
    }

    #[test]
    fn skew_part_sets_imaginary_parts() {
        // P = I, Q = I, F̃ = 0 ⇒ A = −½(I + S); eigenvalues −½ ± i s/2.
        let s = SkewMatrix::from_packed(2, vec![0.8]).unwrap();
        let params = StablePairParams {
            p_inv: SpdMatrix::identity(2),
            ftil: DMatrix::zeros(2, 2),
            s: s.clone(),
            qmode: QMode::Fixed(SpdMatrix::identity(2)),
        };
        let (a, _) = stable_pair_from_params(&params).unwrap();
        let r = eig_structure_check(&a, &SpdMatrix::identity(2), &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2), &s).unwrap();
        for e in &r {
            assert!((e.lambda.re + 0.5).abs() < 1e-12);
            assert!((e.lambda.im.abs() - 0.4).abs() < 1e-12);
            assert!(e.residual_re < 1e-10 && e.residual_im < 1e-10);
        }
    }
}
