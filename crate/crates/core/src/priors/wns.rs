use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::matfound::{skew_len, SkewMatrix, SpdMatrix};
use crate::param::{stable_pair_from_params, QMode, StablePairParams};
use crate::priors::config::{Gaussian, QPrior, WnsConfig};
use crate::priors::wishart::{expected_chol_factor, sample_bartlett_chol, DegreeConvention};

/// Resolved distribution of `Q`.
#[derive(Debug, Clone, PartialEq)]
pub enum QDraw {
    Fixed(SpdMatrix),
    Wishart { k: f64, scale: SpdMatrix },
    AlphaP { k: f64, theta: f64 },
}

/// WNS prior with all hyperparameters resolved to matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct WnsPrior {
    pub n: usize,
    pub k_p: f64,
    pub sigma_p: SpdMatrix,
    pub(crate) f: Gaussian,
    pub(crate) s: Gaussian,
    pub q: QDraw,
    /// Test-only: `P⁻¹` held fixed instead of drawn.
    pub(crate) p_inv_fixed: Option<SpdMatrix>,
}

impl WnsPrior {
    pub fn from_config(cfg: &WnsConfig) -> Result<Self> {
        let n = cfg.n;
        if n == 0 {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        if !(cfg.k_p >= n as f64) {
            return Err(Error::DegreesTooSmall { k: cfg.k_p, n });
        }
        let q = match &cfg.q {
            QPrior::Fixed { q } => QDraw::Fixed(q.resolve(n, "q")?),
            QPrior::Wishart { k_q, sigma_q } => {
                if !(*k_q >= n as f64) {
                    return Err(Error::DegreesTooSmall { k: *k_q, n });
                }
                QDraw::Wishart { k: *k_q, scale: sigma_q.resolve(n, "sigma_q")? }
            }
            QPrior::AlphaP { k_alpha, theta_alpha } => {
                if !(*k_alpha > 0.0 && *theta_alpha > 0.0) || !k_alpha.is_finite() || !theta_alpha.is_finite() {
                    return Err(Error::InvalidConfig("k_alpha and theta_alpha must be positive".into()));
                }
                QDraw::AlphaP { k: *k_alpha, theta: *theta_alpha }
            }
        };
        Ok(Self {
            n,
            k_p: cfg.k_p,
            sigma_p: cfg.sigma_p.resolve(n, "sigma_p")?,
            f: Gaussian::new(cfg.mu_f.resolve(n * n, "mu_f")?, cfg.sigma_f.resolve(n * n, "sigma_f")?),
            s: Gaussian::new(cfg.mu_s.resolve(skew_len(n), "mu_s")?, cfg.sigma_s.resolve(skew_len(n), "sigma_s")?),
            q,
            p_inv_fixed: None,
        })
    }

    pub fn mu_f(&self) -> &DVector<f64> {
        &self.f.mean
    }

    pub fn mu_s(&self) -> &DVector<f64> {
        &self.s.mean
    }

    /// Covariance of `vec(F̃)`.
    pub fn sigma_f(&self) -> DMatrix<f64> {
        &self.f.chol * self.f.chol.transpose()
    }
}

pub(crate) fn sample_gaussian<R: Rng + ?Sized>(g: &Gaussian, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(g.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    &g.mean + &g.chol * z
}

pub(crate) fn sample_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    Ok(Gamma::new(shape, scale).map_err(|e| Error::DomainError(e.to_string()))?.sample(rng))
}

/// Draws the WNS variables (`P⁻¹`, `F̃`, `S`, and `Q` or `α`) shared by every family.
pub(crate) fn sample_wns_params<R: Rng + ?Sized>(prior: &WnsPrior, rng: &mut R) -> Result<StablePairParams> {
    let n = prior.n;
    let p_inv = match &prior.p_inv_fixed {
        Some(p) => p.clone(),
        None => SpdMatrix::from_cholesky(sample_bartlett_chol(prior.k_p, &prior.sigma_p, rng)?)?,
    };
    let ftil = DMatrix::from_column_slice(n, n, sample_gaussian(&prior.f, rng).as_slice());
    let s = SkewMatrix::from_packed(n, sample_gaussian(&prior.s, rng).as_slice().to_vec())?;
    let qmode = match &prior.q {
        QDraw::Fixed(q) => QMode::Fixed(q.clone()),
        QDraw::Wishart { k, scale } => QMode::Random(SpdMatrix::from_cholesky(sample_bartlett_chol(*k, scale, rng)?)?),
        QDraw::AlphaP { k, theta } => QMode::AlphaP(sample_gamma(*k, *theta, rng)?),
    };
    Ok(StablePairParams { p_inv, ftil, s, qmode })
}

/// Draws `(A, F)` and their generating parameters.
pub fn sample_wns<R: Rng + ?Sized>(prior: &WnsPrior, rng: &mut R) -> Result<(StablePairParams, DMatrix<f64>, DMatrix<f64>)> {
    let params = sample_wns_params(prior, rng)?;
    let (a, f) = stable_pair_from_params(&params)?;
    Ok((params, a, f))
}

/// `E[F̃ᵀF̃] = E[F̃]ᵀE[F̃] + Σ^F`, with `Σ^F_ij` the trace of the `(i, j)` block of `Σ_f`.
pub fn expected_ftf(prior: &WnsPrior) -> DMatrix<f64> {
    let n = prior.n;
    let mf = DMatrix::from_column_slice(n, n, prior.f.mean.as_slice());
    let sf = prior.sigma_f();
    let block_trace = DMatrix::from_fn(n, n, |i, j| (0..n).map(|r| sf[(i * n + r, j * n + r)]).sum::<f64>());
    mf.transpose() * mf + block_trace
}

/// `E[Q]`.
pub fn expected_q(prior: &WnsPrior) -> Result<DMatrix<f64>> {
    let n = prior.n;
    match &prior.q {
        QDraw::Fixed(q) => Ok(q.matrix().clone()),
        QDraw::Wishart { k, scale } => Ok(scale.matrix() * *k),
        QDraw::AlphaP { k, theta } => {
            if !(prior.k_p > n as f64 + 1.0) {
                return Err(Error::MomentUndefined(format!(
                    "E[P] needs k_p > n + 1, got k_p = {} with n = {n}",
                    prior.k_p
                )));
            }
            Ok(prior.sigma_p.inverse()?.matrix() * (k * theta / (prior.k_p - n as f64 - 1.0)))
        }
    }
}

/// `E[A]`.
///
/// For `Q = αP` the product `P⁻¹Q = αI` is deterministic given `α`, so
/// `E[A] = −½(E[α] I + E[P⁻¹](E[F̃ᵀF̃] + E[S]))`, which exists for every `k_p ≥ n`.
pub fn expected_a(prior: &WnsPrior) -> Result<DMatrix<f64>> {
    let n = prior.n;
    let e_pinv = prior.sigma_p.matrix() * prior.k_p;
    let e_s = SkewMatrix::from_packed(n, prior.s.mean.as_slice().to_vec())?.matrix();
    let rest = expected_ftf(prior) + e_s;
    Ok(match &prior.q {
        QDraw::AlphaP { k, theta } => (DMatrix::<f64>::identity(n, n) * (k * theta) + e_pinv * rest) * -0.5,
        _ => e_pinv * (expected_q(prior)? + rest) * -0.5,
    })
}

/// `E[F] = E[L_{P⁻¹}] E[F̃]`, using the Bartlett means for the actual degrees `k_p`.
pub fn expected_f(prior: &WnsPrior) -> Result<DMatrix<f64>> {
    let n = prior.n;
    let mf = DMatrix::from_column_slice(n, n, prior.f.mean.as_slice());
    Ok(expected_chol_factor(prior.k_p, &prior.sigma_p, DegreeConvention::Degrees)? * mf)
}
