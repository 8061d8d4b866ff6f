//! Unconstrained coordinates for MCMC.
//!
//! Positive quantities go through `exp`, bounded scalars through an affinely
//! scaled sigmoid, SPD matrices through Bartlett-style Cholesky coordinates
//! relative to a scale matrix, orthogonal factors through Cayley skew
//! coordinates with the sign matrix fixed to the identity.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfound::{cayley, inverse_cayley, lower_inverse, skew_len, SkewMatrix, SpdMatrix};
use crate::param::brl::{BrlParams, GainBlock};
use crate::param::stable_pair::{QMode, StablePairParams};

/// Named block of an unconstrained vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    PLogDiag,
    POffDiag,
    Ftil,
    S,
    QLogDiag,
    QOffDiag,
    LogAlpha,
    C,
    CayleyU,
    CayleyV,
    LogitSigma,
    LogitRho,
    LogGamma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpan {
    pub segment: Segment,
    pub start: usize,
    pub len: usize,
}

impl SegmentSpan {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

/// Flat coordinate vector with its segment map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnconstrainedVector {
    pub coords: Vec<f64>,
    pub layout: Vec<SegmentSpan>,
}

impl UnconstrainedVector {
    pub fn segment(&self, seg: Segment) -> Option<&[f64]> {
        self.layout
            .iter()
            .find(|s| s.segment == seg)
            .map(|s| &self.coords[s.range()])
    }
}

/// How `Q` is represented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QChart {
    /// `Q` is a constant and carries no coordinates.
    Fixed(SpdMatrix),
    /// Bartlett coordinates relative to the given scale matrix.
    Wishart(SpdMatrix),
    /// `Q = αP`, coordinate `log α`.
    AlphaP,
}

/// A scalar that is either constant or mapped from the real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarChart {
    Fixed(f64),
    /// `lo + (hi − lo)·sigmoid(z)`.
    Interval { lo: f64, hi: f64 },
    /// `exp(z)`.
    Positive,
}

impl ScalarChart {
    fn has_coord(&self) -> bool {
        !matches!(self, ScalarChart::Fixed(_))
    }

    pub fn forward(&self, z: f64) -> f64 {
        match *self {
            ScalarChart::Fixed(v) => v,
            ScalarChart::Interval { lo, hi } => lo + (hi - lo) * sigmoid(z),
            ScalarChart::Positive => z.exp(),
        }
    }

    pub fn inverse(&self, x: f64) -> Result<f64> {
        match *self {
            ScalarChart::Fixed(_) => Ok(0.0),
            ScalarChart::Interval { lo, hi } => {
                if !(x > lo && x < hi) {
                    return Err(Error::DomainError(format!("{x} outside ({lo}, {hi})")));
                }
                Ok(logit((x - lo) / (hi - lo)))
            }
            ScalarChart::Positive => {
                if !(x > 0.0) {
                    return Err(Error::DomainError(format!("{x} is not positive")));
                }
                Ok(x.ln())
            }
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Extra pieces of a BRL chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrlChart {
    pub l: usize,
    pub q: usize,
    pub eps: f64,
    pub rho: ScalarChart,
    pub gamma: ScalarChart,
}

/// Layout of the unconstrained coordinates for one distribution family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartLayout {
    pub n: usize,
    /// Scale of the Bartlett coordinates of `P⁻¹`.
    pub sigma_p: SpdMatrix,
    pub q: QChart,
    pub brl: Option<BrlChart>,
}

/// Parameters a chart maps to and from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartParams {
    Stable(StablePairParams),
    Brl(BrlParams),
}

/// Bartlett coordinates `(log diag L̃, offdiag L̃)` of `L = L_Σ L̃`.
pub fn bartlett_coords(chol: &DMatrix<f64>, scale: &SpdMatrix) -> (Vec<f64>, Vec<f64>) {
    let lt = lower_inverse(scale.chol()) * chol;
    let n = lt.nrows();
    let diag = (0..n).map(|i| lt[(i, i)].ln()).collect();
    let mut off = Vec::with_capacity(skew_len(n));
    for j in 0..n {
        for i in (j + 1)..n {
            off.push(lt[(i, j)]);
        }
    }
    (diag, off)
}

/// `L_Σ L̃` with `L̃` built from Bartlett coordinates.
pub fn bartlett_from_coords(log_diag: &[f64], off: &[f64], scale: &SpdMatrix) -> Result<SpdMatrix> {
    let n = log_diag.len();
    let mut lt = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        lt[(j, j)] = log_diag[j].exp();
        for i in (j + 1)..n {
            lt[(i, j)] = off[k];
            k += 1;
        }
    }
    SpdMatrix::from_cholesky(scale.chol() * lt).map_err(|_| Error::DomainError("Bartlett coordinates out of range".into()))
}

impl ChartLayout {
    pub fn segments(&self) -> Vec<SegmentSpan> {
        let n = self.n;
        let mut out = Vec::new();
        let mut push = |segment, len| {
            let start = out.last().map_or(0, |s: &SegmentSpan| s.start + s.len);
            if len > 0 {
                out.push(SegmentSpan { segment, start, len });
            }
        };
        push(Segment::PLogDiag, n);
        push(Segment::POffDiag, skew_len(n));
        push(Segment::Ftil, n * n);
        push(Segment::S, skew_len(n));
        match self.q {
            QChart::Fixed(_) => {}
            QChart::Wishart(_) => {
                push(Segment::QLogDiag, n);
                push(Segment::QOffDiag, skew_len(n));
            }
            QChart::AlphaP => push(Segment::LogAlpha, 1),
        }
        if let Some(b) = &self.brl {
            push(Segment::C, b.q * n);
            push(Segment::CayleyU, skew_len(2 * n + b.q));
            push(Segment::CayleyV, skew_len(b.l));
            push(Segment::LogitSigma, (2 * n + b.q).min(b.l).saturating_sub(1));
            if b.rho.has_coord() {
                push(Segment::LogitRho, 1);
            }
            if b.gamma.has_coord() {
                push(Segment::LogGamma, 1);
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.segments().iter().map(|s| s.len).sum()
    }

    pub fn to_unconstrained(&self, params: &ChartParams) -> Result<UnconstrainedVector> {
        let (p_inv, ftil, s, qmode) = match params {
            ChartParams::Stable(p) => {
                if self.brl.is_some() {
                    return Err(Error::InvalidConfig("BRL chart given stable-pair parameters".into()));
                }
                (&p.p_inv, &p.ftil, &p.s, &p.qmode)
            }
            ChartParams::Brl(p) => {
                if self.brl.is_none() {
                    return Err(Error::InvalidConfig("stable-pair chart given BRL parameters".into()));
                }
                (&p.p_inv, &p.ftil, &p.s, &p.qmode)
            }
        };
        if p_inv.dim() != self.n {
            return Err(Error::DimensionMismatch(format!("parameters have n = {}, chart n = {}", p_inv.dim(), self.n)));
        }
        let layout = self.segments();
        let mut coords = Vec::with_capacity(self.dim());
        let (d, o) = bartlett_coords(p_inv.chol(), &self.sigma_p);
        coords.extend(d);
        coords.extend(o);
        coords.extend(ftil.iter());
        coords.extend(s.packed());
        match (&self.q, qmode) {
            (QChart::Fixed(_), QMode::Fixed(_)) => {}
            (QChart::Wishart(scale), QMode::Random(q) | QMode::Fixed(q)) => {
                let (d, o) = bartlett_coords(q.chol(), scale);
                coords.extend(d);
                coords.extend(o);
            }
            (QChart::AlphaP, QMode::AlphaP(a)) => coords.push(a.ln()),
            _ => return Err(Error::InvalidConfig("Q representation does not match the chart".into())),
        }
        if let (Some(b), ChartParams::Brl(p)) = (&self.brl, params) {
            coords.extend(p.c.iter());
            let (u, v, sigma) = match &p.gain {
                GainBlock::Svd { u, v, sigma } => (u, v, sigma),
                _ => return Err(Error::UnsupportedFamily("chart needs the SVD form of the gain block".into())),
            };
            let rows = 2 * self.n + b.q;
            if u.shape() != (rows, rows) || v.shape() != (b.l, b.l) {
                return Err(Error::UnsupportedFamily("chart needs square Cayley orthogonal factors".into()));
            }
            coords.extend(inverse_cayley(u)?.packed());
            coords.extend(inverse_cayley(v)?.packed());
            let top = 1.0 - b.eps;
            for &sv in &sigma[1..] {
                if !(sv > 0.0 && sv < top) {
                    return Err(Error::DomainError(format!("singular value {sv} outside (0, {top})")));
                }
                coords.push(logit(sv / top));
            }
            if b.rho.has_coord() {
                coords.push(b.rho.inverse(p.rho)?);
            }
            if b.gamma.has_coord() {
                coords.push(b.gamma.inverse(p.gamma)?);
            }
        }
        debug_assert_eq!(coords.len(), layout.iter().map(|s| s.len).sum::<usize>());
        Ok(UnconstrainedVector { coords, layout })
    }

    pub fn from_unconstrained(&self, coords: &[f64]) -> Result<ChartParams> {
        if coords.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("{} coordinates, chart needs {}", coords.len(), self.dim())));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::DomainError("non-finite unconstrained coordinates".into()));
        }
        let n = self.n;
        let segs = self.segments();
        let get = |seg: Segment| -> &[f64] {
            segs.iter().find(|s| s.segment == seg).map_or(&[][..], |s| &coords[s.range()])
        };
        let p_inv = bartlett_from_coords(get(Segment::PLogDiag), get(Segment::POffDiag), &self.sigma_p)?;
        let ftil = DMatrix::from_column_slice(n, n, get(Segment::Ftil));
        let s = SkewMatrix::from_packed(n, get(Segment::S).to_vec())?;
        let qmode = match &self.q {
            QChart::Fixed(q) => QMode::Fixed(q.clone()),
            QChart::Wishart(scale) => QMode::Random(bartlett_from_coords(get(Segment::QLogDiag), get(Segment::QOffDiag), scale)?),
            QChart::AlphaP => {
                let a = get(Segment::LogAlpha)[0].exp();
                if !(a > 0.0 && a.is_finite()) {
                    return Err(Error::DomainError("alpha out of range".into()));
                }
                QMode::AlphaP(a)
            }
        };
        let Some(b) = &self.brl else {
            return Ok(ChartParams::Stable(StablePairParams { p_inv, ftil, s, qmode }));
        };
        let c = DMatrix::from_column_slice(b.q, n, get(Segment::C));
        let rows = 2 * n + b.q;
        let ones_u = vec![1.0; rows];
        let ones_v = vec![1.0; b.l];
        let u = cayley(&SkewMatrix::from_packed(rows, get(Segment::CayleyU).to_vec())?, &ones_u)?.into_matrix();
        let v = cayley(&SkewMatrix::from_packed(b.l, get(Segment::CayleyV).to_vec())?, &ones_v)?.into_matrix();
        let top = 1.0 - b.eps;
        let mut sigma = vec![top];
        sigma.extend(get(Segment::LogitSigma).iter().map(|&z| top * sigmoid(z)));
        let rho = b.rho.forward(get(Segment::LogitRho).first().copied().unwrap_or(0.0));
        let gamma = b.gamma.forward(get(Segment::LogGamma).first().copied().unwrap_or(0.0));
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::DomainError("gamma out of range".into()));
        }
        Ok(ChartParams::Brl(BrlParams {
            p_inv,
            qmode,
            s,
            ftil,
            c,
            gain: GainBlock::Svd { u, v, sigma },
            gamma,
            rho,
        }))
    }
}
