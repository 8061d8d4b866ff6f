use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfound::{from_rows, SpdMatrix};
use crate::param::DEFAULT_EPS;

/// Covariance given either as a variance `s` (meaning `s·I`) or as a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovSpec {
    Isotropic(f64),
    Full(Vec<Vec<f64>>),
}

impl CovSpec {
    pub fn resolve(&self, dim: usize, name: &str) -> Result<SpdMatrix> {
        match self {
            CovSpec::Isotropic(s) => {
                if !(*s > 0.0) || !s.is_finite() {
                    return Err(Error::InvalidConfig(format!("{name}: variance {s} must be positive")));
                }
                Ok(SpdMatrix::scaled_identity(dim, *s))
            }
            CovSpec::Full(rows) => {
                let m = from_rows(rows)?;
                if m.shape() != (dim, dim) {
                    return Err(Error::InvalidConfig(format!(
                        "{name}: expected {dim}x{dim}, got {}x{}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                SpdMatrix::new(&m).map_err(|_| Error::InvalidConfig(format!("{name} is not positive definite")))
            }
        }
    }
}

/// Mean vector given either as a constant fill value or elementwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeanSpec {
    Constant(f64),
    Vector(Vec<f64>),
}

impl Default for MeanSpec {
    fn default() -> Self {
        MeanSpec::Constant(0.0)
    }
}

impl MeanSpec {
    pub fn resolve(&self, len: usize, name: &str) -> Result<DVector<f64>> {
        match self {
            MeanSpec::Constant(v) if v.is_finite() => Ok(DVector::from_element(len, *v)),
            MeanSpec::Vector(v) if v.len() == len && v.iter().all(|x| x.is_finite()) => Ok(DVector::from_column_slice(v)),
            _ => Err(Error::InvalidConfig(format!("{name}: expected {len} finite mean entries"))),
        }
    }
}

/// Distribution of the Lyapunov right-hand side `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum QPrior {
    /// Deterministic `Q` (identity when omitted).
    Fixed {
        #[serde(default = "unit_cov")]
        q: CovSpec,
    },
    /// `Q ~ Wishart(k_q, Σ_q)`.
    Wishart { k_q: f64, sigma_q: CovSpec },
    /// `Q = αP`, `α ~ Gamma(k_α, θ_α)`.
    AlphaP { k_alpha: f64, theta_alpha: f64 },
}

fn unit_cov() -> CovSpec {
    CovSpec::Isotropic(1.0)
}

/// Hyperparameters of the WNS family and its `Q` variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WnsConfig {
    pub n: usize,
    pub k_p: f64,
    pub sigma_p: CovSpec,
    #[serde(default)]
    pub mu_f: MeanSpec,
    pub sigma_f: CovSpec,
    #[serde(default)]
    pub mu_s: MeanSpec,
    pub sigma_s: CovSpec,
    pub q: QPrior,
}

/// Prior or fixed value of a scalar hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarPrior {
    Fixed { value: f64 },
    /// Shape/scale convention, mean `shape·scale`.
    Gamma { shape: f64, scale: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl ScalarPrior {
    pub(crate) fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            ScalarPrior::Fixed { value } => value.is_finite(),
            ScalarPrior::Gamma { shape, scale } => shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite(),
            ScalarPrior::Uniform { lo, hi } => lo < hi && lo.is_finite() && hi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("{name}: invalid prior {self:?}")))
        }
    }
}

/// Orthogonal-factor family for the gain block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum OrthPrior {
    /// QR factor of a Gaussian matrix with column covariance `Σ`.
    Acg {
        #[serde(default = "unit_cov")]
        sigma_u: CovSpec,
        #[serde(default = "unit_cov")]
        sigma_v: CovSpec,
    },
    /// Cayley transform of a Gaussian skew matrix, random ±1 signs.
    Cayley {
        #[serde(default)]
        mu_u: MeanSpec,
        #[serde(default = "unit_cov")]
        sigma_u: CovSpec,
        #[serde(default)]
        mu_v: MeanSpec,
        #[serde(default = "unit_cov")]
        sigma_v: CovSpec,
    },
}

/// How the gain block `(B̃, D, G̃)` is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainPrior {
    /// Spectral-ball `Z` with largest singular value `1 − ε`.
    ZBall,
    /// Separate blocks with top singular values split by `λ ~ Dir(α)`, ordered `(B̃, G̃, D)`.
    Dirichlet { alpha: [f64; 3] },
}

/// Hyperparameters of the WNS-BRL families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WnsBrlConfig {
    pub base: WnsConfig,
    pub l: usize,
    pub q: usize,
    #[serde(default)]
    pub mu_c: MeanSpec,
    pub sigma_c: CovSpec,
    pub gamma: ScalarPrior,
    pub rho: ScalarPrior,
    #[serde(default = "default_eps")]
    pub eps: f64,
    pub orth: OrthPrior,
    #[serde(default = "default_gain")]
    pub gain: GainPrior,
}

fn default_eps() -> f64 {
    DEFAULT_EPS
}

fn default_gain() -> GainPrior {
    GainPrior::ZBall
}

/// Gaussian block `μ + L z` over a flattened matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub(crate) mean: DVector<f64>,
    /// Lower factor of the covariance; all zeros only in test-built degenerate priors.
    pub(crate) chol: DMatrix<f64>,
    pub(crate) cov: Option<SpdMatrix>,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Self {
        Self { mean, chol: cov.chol().clone(), cov: Some(cov) }
    }

    #[cfg(test)]
    pub fn point(mean: DVector<f64>) -> Self {
        let n = mean.len();
        Self { mean, chol: DMatrix::zeros(n, n), cov: None }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.mean.len()
    }
}
