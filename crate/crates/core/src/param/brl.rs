use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfound::{lower_inverse, max_eig_sym, rect_diag, rows_serde, SkewMatrix, SpdMatrix};
use crate::param::ssm::{Dims, Ssm};
use crate::param::stable_pair::{checked_skew, drift_matrix, QMode};

/// Default spectral-ball margin.
pub const DEFAULT_EPS: f64 = 1e-4;

/// Gain block `(B̃, D, G̃)` in one of its equivalent representations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GainBlock {
    /// `Z = (1/γ)[B̃; D; G̃]`, rows stacked as `(n, q, n)`.
    Z {
        #[serde(with = "rows_serde")]
        z: DMatrix<f64>,
    },
    /// The three blocks directly.
    Split {
        #[serde(with = "rows_serde")]
        b: DMatrix<f64>,
        #[serde(with = "rows_serde")]
        d: DMatrix<f64>,
        #[serde(with = "rows_serde")]
        g: DMatrix<f64>,
    },
    /// `Z = U diag(σ) Vᵀ` using the leading `k = len(σ)` columns of `U` and `V`.
    Svd {
        #[serde(with = "rows_serde")]
        u: DMatrix<f64>,
        #[serde(with = "rows_serde")]
        v: DMatrix<f64>,
        sigma: Vec<f64>,
    },
}

impl GainBlock {
    /// Resolves to `(B̃, D, G̃)` for state dimension `n`, output dimension `q` and gain bound `γ`.
    pub fn split(&self, n: usize, q: usize, gamma: f64) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let z = match self {
            GainBlock::Split { b, d, g } => {
                let l = b.ncols();
                if b.shape() != (n, l) || d.shape() != (q, l) || g.shape() != (n, l) {
                    return Err(Error::DimensionMismatch(format!(
                        "gain blocks B̃ {:?}, D {:?}, G̃ {:?} inconsistent with n={n}, q={q}",
                        b.shape(),
                        d.shape(),
                        g.shape()
                    )));
                }
                return Ok((b.clone(), d.clone(), g.clone()));
            }
            GainBlock::Z { z } => z.clone(),
            GainBlock::Svd { .. } => self.z_matrix()?,
        };
        if z.nrows() != 2 * n + q {
            return Err(Error::DimensionMismatch(format!(
                "Z has {} rows, expected 2n+q = {}",
                z.nrows(),
                2 * n + q
            )));
        }
        let l = z.ncols();
        let scaled = z * gamma;
        Ok((
            scaled.view((0, 0), (n, l)).into_owned(),
            scaled.view((n, 0), (q, l)).into_owned(),
            scaled.view((n + q, 0), (n, l)).into_owned(),
        ))
    }

    /// The normalized block `Z`, where one exists independently of `γ`.
    pub fn z_matrix(&self) -> Result<DMatrix<f64>> {
        match self {
            GainBlock::Z { z } => Ok(z.clone()),
            GainBlock::Svd { u, v, sigma } => {
                let k = sigma.len();
                if u.ncols() < k || v.ncols() < k {
                    return Err(Error::DimensionMismatch(format!(
                        "SVD factors {:?}, {:?} have fewer than {k} columns",
                        u.shape(),
                        v.shape()
                    )));
                }
                let uk = u.columns(0, k);
                let vk = v.columns(0, k);
                Ok(uk * rect_diag(k, k, sigma)? * vk.transpose())
            }
            GainBlock::Split { .. } => Err(Error::InvalidConfig("split gain block has no Z form without γ".into())),
        }
    }

    fn ncols(&self) -> usize {
        match self {
            GainBlock::Z { z } => z.ncols(),
            GainBlock::Split { b, .. } => b.ncols(),
            GainBlock::Svd { v, .. } => v.nrows(),
        }
    }
}

/// Free parameters generating a model that satisfies the stochastic BRL with gain bound `γ`:
/// `A = −½P⁻¹(Q + F̃ᵀF̃ + CᵀC + S)`, `F = L_{P⁻¹}F̃`, `G = L_{P⁻¹}G̃`,
/// `B = P⁻¹(L_Q B̃ − ρF̃ᵀG̃ − CᵀD)`, subject to `B̃ᵀB̃ + DᵀD + G̃ᵀG̃ ≺ γ²I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrlParams {
    pub p_inv: SpdMatrix,
    pub qmode: QMode,
    pub s: SkewMatrix,
    #[serde(with = "rows_serde")]
    pub ftil: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub c: DMatrix<f64>,
    pub gain: GainBlock,
    pub gamma: f64,
    pub rho: f64,
}

impl BrlParams {
    pub fn dims(&self) -> Dims {
        Dims {
            n: self.p_inv.dim(),
            l: self.gain.ncols(),
            q: self.c.nrows(),
        }
    }

    pub fn q(&self) -> Result<SpdMatrix> {
        self.qmode.resolve(&self.p_inv)
    }

    pub fn p(&self) -> Result<SpdMatrix> {
        self.p_inv.inverse()
    }

    fn validate(&self) -> Result<()> {
        let n = self.p_inv.dim();
        if self.ftil.shape() != (n, n) || self.s.dim() != n || self.c.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "F̃ {:?}, S {}, C {:?} inconsistent with n = {n}",
                self.ftil.shape(),
                self.s.dim(),
                self.c.shape()
            )));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::DomainError(format!("gamma = {} must be positive", self.gamma)));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::DomainError(format!("rho = {} outside [-1, 1]", self.rho)));
        }
        if let QMode::AlphaP(a) = self.qmode {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::DomainError(format!("alpha = {a} must be positive")));
            }
        }
        Ok(())
    }
}

/// `λ_max(B̃ᵀB̃ + DᵀD + G̃ᵀG̃ − γ²I)`; the gain condition holds iff this is negative.
pub fn check_brl_condition(b: &DMatrix<f64>, d: &DMatrix<f64>, g: &DMatrix<f64>, gamma: f64) -> Result<f64> {
    let l = b.ncols();
    let m = b.transpose() * b + d.transpose() * d + g.transpose() * g - DMatrix::<f64>::identity(l, l) * (gamma * gamma);
    max_eig_sym(&m)
}

/// Realizes the model and its certificate `P`.
pub fn ssm_from_brl_params(p: &BrlParams) -> Result<(Ssm, SpdMatrix)> {
    p.validate()?;
    let Dims { n, q, .. } = p.dims();
    let (bt, d, gt) = p.gain.split(n, q, p.gamma)?;
    let lam = check_brl_condition(&bt, &d, &gt, p.gamma)?;
    if !(lam < 0.0) {
        return Err(Error::GainConditionViolated(lam));
    }
    let qm = p.q()?;
    let l_inv = p.p_inv.chol();
    let extra = p.ftil.transpose() * &p.ftil + p.c.transpose() * &p.c;
    let a = drift_matrix(&p.p_inv, &p.qmode, &extra, &p.s.matrix())?;
    let f = l_inv * &p.ftil;
    let g = l_inv * &gt;
    let b = p.p_inv.matrix() * (qm.chol() * &bt - p.ftil.transpose() * &gt * p.rho - p.c.transpose() * &d);
    let ssm = Ssm::new(a, b, p.c.clone(), d, f, g, p.rho)?;
    Ok((ssm, p.p()?))
}

/// Recovers BRL parameters from a model and a certificate `P` valid for gain bound `γ`.
pub fn brl_params_from_ssm(s: &Ssm, p: &SpdMatrix, gamma: f64) -> Result<BrlParams> {
    s.validate()?;
    let n = s.dims().n;
    if p.dim() != n {
        return Err(Error::DimensionMismatch(format!("certificate is {0}x{0}, model has n = {n}", p.dim())));
    }
    let m = assemble_brl_matrix(s, p, gamma);
    let lam = max_eig_sym(&m)?;
    if !(lam < 0.0) {
        return Err(Error::NotACertificate(format!("λ_max(M) = {lam:e} is not negative")));
    }
    let m11 = m.view((0, 0), (n, n)).into_owned();
    let q = SpdMatrix::new(&-m11).map_err(|_| Error::NotACertificate("Q = −M₁₁ is not positive definite".into()))?;
    let p_inv = p.inverse()?;
    let l_inv_inv = lower_inverse(p_inv.chol());
    let ftil = &l_inv_inv * &s.f;
    let gt = &l_inv_inv * &s.g;
    let rhs = p.matrix() * &s.b + ftil.transpose() * &gt * s.rho + s.c.transpose() * &s.d;
    let bt = lower_inverse(q.chol()) * rhs;
    let ftf = ftil.transpose() * &ftil;
    let ctc = s.c.transpose() * &s.c;
    let pa = p.matrix() * &s.a;
    let s_full = -(&pa * 2.0 + q.matrix() + &ftf + &ctc);
    let skew = checked_skew(&s_full, pa.norm() + q.matrix().norm() + ftf.norm() + ctc.norm())?;
    Ok(BrlParams {
        p_inv,
        qmode: QMode::Fixed(q),
        s: skew,
        ftil,
        c: s.c.clone(),
        gain: GainBlock::Split { b: bt, d: s.d.clone(), g: gt },
        gamma,
        rho: s.rho,
    })
}

/// Block matrix
/// `M = [[PA + AᵀP + FᵀPF + CᵀC, PB + ρFᵀPG + CᵀD], [·ᵀ, DᵀD − γ²I + GᵀPG]]`.
pub fn assemble_brl_matrix(s: &Ssm, p: &SpdMatrix, gamma: f64) -> DMatrix<f64> {
    let Dims { n, l, .. } = s.dims();
    let pm = p.matrix();
    let ft_p = s.f.transpose() * pm;
    let pa = pm * &s.a;
    let m11 = &pa + pa.transpose() + &ft_p * &s.f + s.c.transpose() * &s.c;
    let m12 = pm * &s.b + &ft_p * &s.g * s.rho + s.c.transpose() * &s.d;
    let m22 = s.d.transpose() * &s.d + s.g.transpose() * pm * &s.g - DMatrix::<f64>::identity(l, l) * (gamma * gamma);
    let mut m = DMatrix::zeros(n + l, n + l);
    m.view_mut((0, 0), (n, n)).copy_from(&m11);
    m.view_mut((0, n), (n, l)).copy_from(&m12);
    m.view_mut((n, 0), (l, n)).copy_from(&m12.transpose());
    m.view_mut((n, n), (l, l)).copy_from(&m22);
    crate::matfound::symmetrize(&m)
}
