use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matfound::{cayley, qr_orthonormal, rect_diag, skew_len, OrthogonalMatrix, SkewMatrix, SpdMatrix};
use crate::param::GainBlock;
use crate::priors::config::Gaussian;
use crate::priors::wns::{sample_gamma, sample_gaussian};

const ACG_RETRIES: usize = 8;

/// QR orthonormal factor of `L_Σ Z`, `Z` a `rows × cols` standard Gaussian matrix.
pub fn sample_acg_orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, sigma: &SpdMatrix, rng: &mut R) -> Result<OrthogonalMatrix> {
    if sigma.dim() != rows || cols > rows || cols == 0 {
        return Err(Error::DimensionMismatch(format!(
            "ACG {rows}x{cols} with a {0}x{0} column covariance",
            sigma.dim()
        )));
    }
    for _ in 0..ACG_RETRIES {
        let z = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        match qr_orthonormal(&(sigma.chol() * z)) {
            Err(Error::RankDeficient) => continue,
            other => return other,
        }
    }
    Err(Error::RankDeficient)
}

/// `E(I − S)(I + S)⁻¹` with `veck(S) ~ N(μ, Σ)` and independent Rademacher signs on `E`.
pub fn sample_cayley_orthogonal<R: Rng + ?Sized>(dim: usize, mean: &DVector<f64>, cov: &SpdMatrix, rng: &mut R) -> Result<OrthogonalMatrix> {
    if mean.len() != skew_len(dim) || cov.dim() != skew_len(dim) {
        return Err(Error::DimensionMismatch(format!("Cayley {dim}x{dim} needs {} skew coordinates", skew_len(dim))));
    }
    sample_cayley(&Gaussian::new(mean.clone(), cov.clone()), dim, rng)
}

fn sample_cayley<R: Rng + ?Sized>(g: &Gaussian, dim: usize, rng: &mut R) -> Result<OrthogonalMatrix> {
    let s = SkewMatrix::from_packed(dim, sample_gaussian(g, rng).as_slice().to_vec())?;
    let signs: Vec<f64> = (0..dim).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    cayley(&s, &signs)
}

/// Resolved sampler of orthogonal matrices of one size.
#[derive(Debug, Clone, PartialEq)]
pub enum OrthSampler {
    Acg { sigma: SpdMatrix },
    Cayley { dim: usize, skew: Gaussian },
}

impl OrthSampler {
    pub fn dim(&self) -> usize {
        match self {
            OrthSampler::Acg { sigma } => sigma.dim(),
            OrthSampler::Cayley { dim, .. } => *dim,
        }
    }

    /// Orthogonal matrix whose leading `k` columns are distributed per the family
    /// (square for Cayley, `dim × k` for ACG).
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<DMatrix<f64>> {
        Ok(match self {
            OrthSampler::Acg { sigma } => sample_acg_orthogonal(sigma.dim(), k, sigma, rng)?.into_matrix(),
            OrthSampler::Cayley { dim, skew } => sample_cayley(skew, *dim, rng)?.into_matrix(),
        })
    }
}

/// Singular values `(top, U(0, top), …)` of length `k`.
fn singular_values<R: Rng + ?Sized>(top: f64, k: usize, rng: &mut R) -> Vec<f64> {
    let mut s = Vec::with_capacity(k);
    s.push(top);
    for _ in 1..k {
        s.push(top * rng.random::<f64>());
    }
    s
}

/// Spectral-ball gain block: `Z = U diag(σ) Vᵀ` with `σ₁ = 1 − ε`, `σᵢ ~ U(0, 1 − ε)`,
/// split into `(B̃, D, G̃) = γ Z` by rows `(n, q, n)`.
pub fn sample_gain_block_zball<R: Rng + ?Sized>(
    n: usize,
    q: usize,
    gamma: f64,
    eps: f64,
    u: &OrthSampler,
    v: &OrthSampler,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, GainBlock)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidConfig(format!("eps = {eps} outside (0, 1)")));
    }
    let rows = 2 * n + q;
    let l = v.dim();
    if u.dim() != rows {
        return Err(Error::DimensionMismatch(format!("U sampler has size {}, expected {rows}", u.dim())));
    }
    let k = rows.min(l);
    let um = u.sample(k, rng)?;
    let vm = v.sample(k, rng)?;
    let gain = GainBlock::Svd { u: um, v: vm, sigma: singular_values(1.0 - eps, k, rng) };
    let (b, d, g) = gain.split(n, q, gamma)?;
    Ok((b, d, g, gain))
}

/// One `rows × cols` block with top singular value `top`.
fn sample_block<R: Rng + ?Sized>(u: &OrthSampler, v: &OrthSampler, top: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let k = u.dim().min(v.dim());
    let um = u.sample(k, rng)?;
    let vm = v.sample(k, rng)?;
    let s = singular_values(top, k, rng);
    Ok(um.columns(0, k) * rect_diag(k, k, &s)? * vm.columns(0, k).transpose())
}

/// Dirichlet gain block: `λ = (λ_b, λ_g, λ_d) ~ Dir(α)`, each block drawn through its own
/// SVD with top singular value `λ_x(1 − ε)γ`. Returns `(B̃, D, G̃, λ)`.
#[allow(clippy::too_many_arguments)]
pub fn sample_gain_block_dirichlet<R: Rng + ?Sized>(
    gamma: f64,
    eps: f64,
    alpha: [f64; 3],
    n_side: &OrthSampler,
    q_side: &OrthSampler,
    v: &OrthSampler,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, [f64; 3])> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidConfig(format!("eps = {eps} outside (0, 1)")));
    }
    if alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
        return Err(Error::InvalidConfig("Dirichlet concentrations must be positive".into()));
    }
    let g: Vec<f64> = alpha.iter().map(|&a| sample_gamma(a, 1.0, rng)).collect::<Result<_>>()?;
    let total: f64 = g.iter().sum();
    let lambda = if total > 0.0 {
        [g[0] / total, g[1] / total, 1.0 - g[0] / total - g[1] / total]
    } else {
        [1.0 / 3.0; 3]
    };
    let scale = (1.0 - eps) * gamma;
    let b = sample_block(n_side, v, lambda[0] * scale, rng)?;
    let gt = sample_block(n_side, v, lambda[1] * scale, rng)?;
    let d = sample_block(q_side, v, lambda[2] * scale, rng)?;
    Ok((b, d, gt, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matfound::max_eig_sym;
    use crate::param::check_brl_condition;
    use crate::priors::RngStream;

    fn cayley_sampler(dim: usize) -> OrthSampler {
        OrthSampler::Cayley { dim, skew: Gaussian::new(DVector::zeros(skew_len(dim)), SpdMatrix::identity(skew_len(dim))) }
    }

    #[test]
    fn acg_square_is_orthogonal() {
        let mut rng = RngStream::new(5, 0).rng();
        let u = sample_acg_orthogonal(4, 4, &SpdMatrix::identity(4), &mut rng).unwrap();
        assert!((u.matrix().transpose() * u.matrix() - DMatrix::<f64>::identity(4, 4)).norm() < 1e-10);
    }

    #[test]
    fn acg_vector_mean_is_zero() {
        let mut rng = RngStream::new(6, 0).rng();
        let n = 100_000;
        let mut acc = DVector::<f64>::zeros(3);
        for _ in 0..n {
            acc += sample_acg_orthogonal(3, 1, &SpdMatrix::identity(3), &mut rng).unwrap().matrix().column(0);
        }
        acc /= n as f64;
        assert!(acc.iter().all(|v| v.abs() < 0.02), "{acc}");
    }

    #[test]
    fn zball_single_input() {
        let mut rng = RngStream::new(7, 0).rng();
        let acg = OrthSampler::Acg { sigma: SpdMatrix::identity(3) };
        let v = OrthSampler::Acg { sigma: SpdMatrix::identity(1) };
        let (b, d, g, gain) = sample_gain_block_zball(1, 1, 3.0, 1e-4, &acg, &v, &mut rng).unwrap();
        let z = gain.z_matrix().unwrap();
        assert!((z.norm() - 0.9999).abs() < 1e-12);
        let lam = check_brl_condition(&b, &d, &g, 3.0).unwrap();
        assert!((lam - 9.0 * (0.9999f64.powi(2) - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn zball_top_singular_value_is_sharp() {
        let mut rng = RngStream::new(8, 0).rng();
        let u = cayley_sampler(5);
        let v = cayley_sampler(3);
        for _ in 0..50 {
            let (_, _, _, gain) = sample_gain_block_zball(2, 1, 3.0, 1e-4, &u, &v, &mut rng).unwrap();
            let z = gain.z_matrix().unwrap();
            let top = max_eig_sym(&(z.transpose() * &z)).unwrap().sqrt();
            assert!((top - 0.9999).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_blocks_satisfy_condition() {
        let mut rng = RngStream::new(9, 0).rng();
        let ns = OrthSampler::Acg { sigma: SpdMatrix::identity(3) };
        let qs = OrthSampler::Acg { sigma: SpdMatrix::identity(1) };
        let v = OrthSampler::Acg { sigma: SpdMatrix::identity(2) };
        let mut mean = [0.0; 3];
        let draws = 100_000;
        for i in 0..draws {
            let (b, d, g, lam) = sample_gain_block_dirichlet(3.0, 1e-4, [1.0; 3], &ns, &qs, &v, &mut rng).unwrap();
            assert!((lam.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            if i < 1000 {
                assert!(check_brl_condition(&b, &d, &g, 3.0).unwrap() < 0.0);
            }
            for j in 0..3 {
                mean[j] += lam[j] / draws as f64;
            }
        }
        assert!(mean.iter().all(|m| (m - 1.0 / 3.0).abs() < 0.01 / 3.0), "{mean:?}");
    }
}
