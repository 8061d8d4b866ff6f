use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matfound::{skew_len, SpdMatrix};
use crate::param::chart::{BrlChart, QChart, ScalarChart};
use crate::param::{ssm_from_brl_params, BrlParams, ChartLayout, GainBlock, Ssm};
use crate::priors::config::{Gaussian, GainPrior, OrthPrior, ScalarPrior, WnsBrlConfig, CovSpec, MeanSpec};
use crate::priors::gain::{sample_gain_block_dirichlet, sample_gain_block_zball, OrthSampler};
use crate::priors::wns::{sample_gamma, sample_gaussian, sample_wns_params, QDraw, WnsPrior};

/// Resolved gain-block sampler.
#[derive(Debug, Clone, PartialEq)]
pub enum GainSampler {
    ZBall { u: OrthSampler, v: OrthSampler },
    Dirichlet { alpha: [f64; 3], n_side: OrthSampler, q_side: OrthSampler, v: OrthSampler },
}

/// WNS-BRL prior with resolved hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WnsBrlPrior {
    pub base: WnsPrior,
    pub l: usize,
    pub q: usize,
    pub(crate) c: Gaussian,
    pub gamma: ScalarPrior,
    pub rho: ScalarPrior,
    pub eps: f64,
    pub gain: GainSampler,
    /// Test-only: gain block forced to zero.
    pub(crate) zero_gain: bool,
}

fn orth_sampler(orth: &OrthPrior, dim: usize, u_side: bool) -> Result<OrthSampler> {
    Ok(match orth {
        OrthPrior::Acg { sigma_u, sigma_v } => {
            let s = if u_side { sigma_u } else { sigma_v };
            OrthSampler::Acg { sigma: s.resolve(dim, if u_side { "sigma_u" } else { "sigma_v" })? }
        }
        OrthPrior::Cayley { mu_u, sigma_u, mu_v, sigma_v } => {
            let (mu, s): (&MeanSpec, &CovSpec) = if u_side { (mu_u, sigma_u) } else { (mu_v, sigma_v) };
            let len = skew_len(dim);
            let name = if u_side { "sigma_u" } else { "sigma_v" };
            let cov = if len == 0 { SpdMatrix::identity(0) } else { s.resolve(len, name)? };
            OrthSampler::Cayley { dim, skew: Gaussian::new(mu.resolve(len, name)?, cov) }
        }
    })
}

impl WnsBrlPrior {
    pub fn from_config(cfg: &WnsBrlConfig) -> Result<Self> {
        let base = WnsPrior::from_config(&cfg.base)?;
        let n = base.n;
        let (l, q) = (cfg.l, cfg.q);
        if l == 0 || q == 0 {
            return Err(Error::InvalidConfig("l and q must be positive".into()));
        }
        if !(cfg.eps > 0.0 && cfg.eps < 1.0) {
            return Err(Error::InvalidConfig(format!("eps = {} outside (0, 1)", cfg.eps)));
        }
        cfg.gamma.validate("gamma")?;
        cfg.rho.validate("rho")?;
        let gamma_ok = match cfg.gamma {
            ScalarPrior::Fixed { value } => value > 0.0,
            ScalarPrior::Gamma { .. } => true,
            ScalarPrior::Uniform { lo, .. } => lo >= 0.0,
        };
        let rho_ok = match cfg.rho {
            ScalarPrior::Fixed { value } => (-1.0..=1.0).contains(&value),
            ScalarPrior::Uniform { lo, hi } => lo >= -1.0 && hi <= 1.0,
            ScalarPrior::Gamma { .. } => false,
        };
        if !gamma_ok {
            return Err(Error::InvalidConfig("gamma prior must be supported on (0, ∞)".into()));
        }
        if !rho_ok {
            return Err(Error::InvalidConfig("rho prior must be supported on [-1, 1]".into()));
        }
        let gain = match cfg.gain {
            GainPrior::ZBall => GainSampler::ZBall {
                u: orth_sampler(&cfg.orth, 2 * n + q, true)?,
                v: orth_sampler(&cfg.orth, l, false)?,
            },
            GainPrior::Dirichlet { alpha } => {
                if alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
                    return Err(Error::InvalidConfig("Dirichlet concentrations must be positive".into()));
                }
                GainSampler::Dirichlet {
                    alpha,
                    n_side: orth_sampler(&cfg.orth, n, true)?,
                    q_side: orth_sampler(&cfg.orth, q, true)?,
                    v: orth_sampler(&cfg.orth, l, false)?,
                }
            }
        };
        Ok(Self {
            c: Gaussian::new(cfg.mu_c.resolve(q * n, "mu_c")?, cfg.sigma_c.resolve(q * n, "sigma_c")?),
            base,
            l,
            q,
            gamma: cfg.gamma,
            rho: cfg.rho,
            eps: cfg.eps,
            gain,
            zero_gain: false,
        })
    }

    /// Coordinates used for inference. Only the spectral-ball Cayley family has one.
    pub fn chart_layout(&self) -> Result<ChartLayout> {
        match &self.gain {
            GainSampler::ZBall { u: OrthSampler::Cayley { .. }, v: OrthSampler::Cayley { .. } } => {}
            _ => {
                return Err(Error::UnsupportedFamily(
                    "unconstrained coordinates exist only for the spectral-ball Cayley family".into(),
                ))
            }
        }
        let rho = match self.rho {
            ScalarPrior::Fixed { value } => ScalarChart::Fixed(value),
            ScalarPrior::Uniform { lo, hi } => ScalarChart::Interval { lo, hi },
            ScalarPrior::Gamma { .. } => unreachable!("rejected at construction"),
        };
        let gamma = match self.gamma {
            ScalarPrior::Fixed { value } => ScalarChart::Fixed(value),
            ScalarPrior::Gamma { .. } => ScalarChart::Positive,
            ScalarPrior::Uniform { lo, hi } => ScalarChart::Interval { lo, hi },
        };
        Ok(ChartLayout {
            brl: Some(BrlChart { l: self.l, q: self.q, eps: self.eps, rho, gamma }),
            ..self.base.chart_layout()
        })
    }
}

impl WnsPrior {
    /// Coordinates for the stable-pair family.
    pub fn chart_layout(&self) -> ChartLayout {
        ChartLayout {
            n: self.n,
            sigma_p: self.sigma_p.clone(),
            q: match &self.q {
                QDraw::Fixed(q) => QChart::Fixed(q.clone()),
                QDraw::Wishart { scale, .. } => QChart::Wishart(scale.clone()),
                QDraw::AlphaP { .. } => QChart::AlphaP,
            },
            brl: None,
        }
    }
}

pub(crate) fn sample_scalar<R: Rng + ?Sized>(p: &ScalarPrior, rng: &mut R) -> Result<f64> {
    Ok(match *p {
        ScalarPrior::Fixed { value } => value,
        ScalarPrior::Gamma { shape, scale } => sample_gamma(shape, scale, rng)?,
        ScalarPrior::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
    })
}

/// Draws a model from a WNS-BRL prior together with its parameters and certificate `P`.
pub fn sample_wns_brl<R: Rng + ?Sized>(prior: &WnsBrlPrior, rng: &mut R) -> Result<(BrlParams, Ssm, SpdMatrix)> {
    let n = prior.base.n;
    let q = prior.q;
    let base = sample_wns_params(&prior.base, rng)?;
    let c = DMatrix::from_column_slice(q, n, sample_gaussian(&prior.c, rng).as_slice());
    let gamma = sample_scalar(&prior.gamma, rng)?;
    let rho = sample_scalar(&prior.rho, rng)?;
    let gain = if prior.zero_gain {
        GainBlock::Z { z: DMatrix::zeros(2 * n + q, prior.l) }
    } else {
        match &prior.gain {
            GainSampler::ZBall { u, v } => sample_gain_block_zball(n, q, gamma, prior.eps, u, v, rng)?.3,
            GainSampler::Dirichlet { alpha, n_side, q_side, v } => {
                let (b, d, g, _) = sample_gain_block_dirichlet(gamma, prior.eps, *alpha, n_side, q_side, v, rng)?;
                GainBlock::Split { b, d, g }
            }
        }
    };
    let params = BrlParams {
        p_inv: base.p_inv,
        qmode: base.qmode,
        s: base.s,
        ftil: base.ftil,
        c,
        gain,
        gamma,
        rho,
    };
    let (ssm, p) = ssm_from_brl_params(&params)?;
    Ok((params, ssm, p))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::matfound::max_eig_sym;
    use crate::param::assemble_brl_matrix;
    use crate::priors::config::{QPrior, WnsConfig};
    use crate::priors::RngStream;

    pub(crate) fn paper_like(orth: OrthPrior) -> WnsBrlConfig {
        WnsBrlConfig {
            base: WnsConfig {
                n: 4,
                k_p: 6.0,
                sigma_p: CovSpec::Isotropic(1.0),
                mu_f: MeanSpec::Constant(0.0),
                sigma_f: CovSpec::Isotropic(2.0),
                mu_s: MeanSpec::Constant(0.0),
                sigma_s: CovSpec::Isotropic(0.01),
                q: QPrior::Wishart { k_q: 6.0, sigma_q: CovSpec::Isotropic(2.0) },
            },
            l: 2,
            q: 1,
            mu_c: MeanSpec::Constant(0.0),
            sigma_c: CovSpec::Isotropic(2.0),
            gamma: ScalarPrior::Fixed { value: 3.0 },
            rho: ScalarPrior::Fixed { value: 0.3 },
            eps: 1e-4,
            orth,
            gain: GainPrior::ZBall,
        }
    }

    pub(crate) fn cayley() -> OrthPrior {
        OrthPrior::Cayley {
            mu_u: MeanSpec::Constant(0.0),
            sigma_u: CovSpec::Isotropic(1.0),
            mu_v: MeanSpec::Constant(0.0),
            sigma_v: CovSpec::Isotropic(1.0),
        }
    }

    #[test]
    fn paper_shaped_draws_are_certified() {
        let prior = WnsBrlPrior::from_config(&paper_like(cayley())).unwrap();
        let mut rng = RngStream::new(10, 0).rng();
        for _ in 0..100 {
            let (_, ssm, p) = sample_wns_brl(&prior, &mut rng).unwrap();
            assert_eq!((ssm.a.nrows(), ssm.b.ncols(), ssm.c.nrows()), (4, 2, 1));
            assert!(max_eig_sym(&assemble_brl_matrix(&ssm, &p, 3.0)).unwrap() < 0.0);
        }
    }

    #[test]
    fn zero_gain_hook() {
        let mut prior = WnsBrlPrior::from_config(&paper_like(cayley())).unwrap();
        prior.zero_gain = true;
        let (_, ssm, _) = sample_wns_brl(&prior, &mut RngStream::new(11, 0).rng()).unwrap();
        assert!(ssm.b.iter().chain(ssm.d.iter()).chain(ssm.g.iter()).all(|v| *v == 0.0));
    }

    #[test]
    fn acg_has_no_chart() {
        let prior = WnsBrlPrior::from_config(&paper_like(OrthPrior::Acg {
            sigma_u: CovSpec::Isotropic(1.0),
            sigma_v: CovSpec::Isotropic(1.0),
        }))
        .unwrap();
        assert!(matches!(prior.chart_layout(), Err(Error::UnsupportedFamily(_))));
    }
}
