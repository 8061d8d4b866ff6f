use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::matfound::SpdMatrix;

/// Lower factor `L = L_Σ L̃` of a `Wishart(k, Σ)` draw via the Bartlett
/// decomposition: `L̃ᵢᵢ² ~ χ²_{k−i+1}` and `L̃ᵢⱼ ~ N(0, 1)` below the diagonal.
pub fn sample_bartlett_chol<R: Rng + ?Sized>(k: f64, sigma: &SpdMatrix, rng: &mut R) -> Result<DMatrix<f64>> {
    let n = sigma.dim();
    if !(k >= n as f64) {
        return Err(Error::DegreesTooSmall { k, n });
    }
    Ok(sigma.chol() * sample_bartlett_factor(k, n, rng)?)
}

/// The standardized factor `L̃` alone.
pub(crate) fn sample_bartlett_factor<R: Rng + ?Sized>(k: f64, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let mut lt = DMatrix::zeros(n, n);
    for j in 0..n {
        let chi = ChiSquared::new(k - j as f64).map_err(|e| Error::DomainError(e.to_string()))?;
        lt[(j, j)] = chi.sample(rng).sqrt();
        for i in (j + 1)..n {
            lt[(i, j)] = rng.sample(StandardNormal);
        }
    }
    Ok(lt)
}

/// Which degrees enter the Gamma-ratio for `E[L̃ᵢᵢ]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeConvention {
    /// `√2 Γ((n−i+2)/2) / Γ((n−i+1)/2)`, with the matrix dimension `n`.
    Dimension,
    /// `√2 Γ((k−i+2)/2) / Γ((k−i+1)/2)`, the mean of `χ_{k−i+1}`; matches [`sample_bartlett_chol`].
    Degrees,
}

/// `E[c]` for `c² ~ χ²_ν`.
pub fn chi_mean(nu: f64) -> f64 {
    std::f64::consts::SQRT_2 * (ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0)).exp()
}

/// Diagonal of `𝖣 = E[L̃]`.
pub fn bartlett_diag_mean(k: f64, n: usize, convention: DegreeConvention) -> Vec<f64> {
    let base = match convention {
        DegreeConvention::Dimension => n as f64,
        DegreeConvention::Degrees => k,
    };
    (0..n).map(|i| chi_mean(base - i as f64)).collect()
}

/// `E[L_{P⁻¹}] = L_{Σ_p} 𝖣` for `P⁻¹ ~ Wishart(k_p, Σ_p)`.
pub fn expected_chol_factor(k_p: f64, sigma_p: &SpdMatrix, convention: DegreeConvention) -> Result<DMatrix<f64>> {
    let n = sigma_p.dim();
    if !(k_p >= n as f64) {
        return Err(Error::DegreesTooSmall { k: k_p, n });
    }
    let d = bartlett_diag_mean(k_p, n, convention);
    Ok(sigma_p.chol() * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::RngStream;
    use approx::assert_relative_eq;

    #[test]
    fn printed_gamma_ratio_values() {
        let d1 = expected_chol_factor(1.0, &SpdMatrix::identity(1), DegreeConvention::Dimension).unwrap();
        assert_relative_eq!(d1[(0, 0)], (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-12);
        let d2 = expected_chol_factor(2.0, &SpdMatrix::identity(2), DegreeConvention::Dimension).unwrap();
        assert_relative_eq!(d2[(0, 0)], (std::f64::consts::PI / 2.0).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(d2[(1, 1)], (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-12);
        assert_eq!(d2[(1, 0)], 0.0);
    }

    #[test]
    fn conventions_agree_when_k_equals_n() {
        let a = bartlett_diag_mean(3.0, 3, DegreeConvention::Dimension);
        let b = bartlett_diag_mean(3.0, 3, DegreeConvention::Degrees);
        assert_eq!(a, b);
    }

    #[test]
    fn degrees_too_small() {
        let mut rng = RngStream::new(0, 0).rng();
        assert_eq!(
            sample_bartlett_chol(1.5, &SpdMatrix::identity(2), &mut rng),
            Err(Error::DegreesTooSmall { k: 1.5, n: 2 })
        );
    }

    #[test]
    fn scalar_chi_square_mean() {
        let mut rng = RngStream::new(1, 0).rng();
        let n = 100_000;
        let m: f64 = (0..n)
            .map(|_| sample_bartlett_chol(3.0, &SpdMatrix::identity(1), &mut rng).unwrap()[(0, 0)].powi(2))
            .sum::<f64>()
            / n as f64;
        assert!((m - 3.0).abs() < 0.05, "{m}");
    }

    #[test]
    fn scale_multiplies_draws() {
        let mut r1 = RngStream::new(2, 0).rng();
        let mut r2 = RngStream::new(2, 0).rng();
        for _ in 0..20 {
            let a = sample_bartlett_chol(3.0, &SpdMatrix::identity(1), &mut r1).unwrap();
            let b = sample_bartlett_chol(3.0, &SpdMatrix::scaled_identity(1, 4.0), &mut r2).unwrap();
            assert_eq!(b[(0, 0)], 2.0 * a[(0, 0)]);
        }
    }

    #[test]
    fn wishart_mean() {
        let mut rng = RngStream::new(3, 0).rng();
        let n = 100_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let l = sample_bartlett_chol(5.0, &SpdMatrix::identity(2), &mut rng).unwrap();
            acc += &l * l.transpose();
        }
        acc /= n as f64;
        assert!((acc[(0, 0)] - 5.0).abs() < 0.1 && (acc[(1, 1)] - 5.0).abs() < 0.1);
        assert!(acc[(0, 1)].abs() < 0.1);
    }
}
