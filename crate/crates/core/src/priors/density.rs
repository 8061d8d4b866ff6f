use nalgebra::DVector;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::param::chart::{logit, sigmoid, SegmentSpan};
use crate::param::{ChartLayout, Segment, UnconstrainedVector};
use crate::priors::brl::{GainSampler, WnsBrlPrior};
use crate::priors::config::{Gaussian, ScalarPrior};
use crate::priors::gain::OrthSampler;
use crate::priors::wns::{sample_gamma, QDraw, WnsPrior};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Density of one block of coordinates.
#[derive(Debug, Clone, PartialEq)]
enum Term {
    /// `z = ln c`, `c² ~ χ²_{k−i}` for the `i`-th (0-based) entry.
    BartlettLogDiag { k: f64 },
    StdNormal,
    Gaussian(Gaussian),
    /// `z = ln x`, `x ~ Gamma(shape, scale)`.
    LogGamma { shape: f64, scale: f64 },
    /// `z = logit(x)`, `x ~ U(0, 1)`.
    Logistic,
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Prior density over the unconstrained coordinates of a chart: the product of
/// the independent generative coordinates, each with its change-of-variables term.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPrior {
    pub layout: ChartLayout,
    segments: Vec<(SegmentSpan, Term)>,
}

fn gaussian_term(g: &Gaussian) -> Result<Term> {
    if g.cov.is_none() {
        return Err(Error::InvalidConfig("degenerate Gaussian block has no density".into()));
    }
    Ok(Term::Gaussian(g.clone()))
}

fn scalar_term(p: &ScalarPrior) -> Term {
    match *p {
        ScalarPrior::Gamma { shape, scale } => Term::LogGamma { shape, scale },
        _ => Term::Logistic,
    }
}

impl ChartPrior {
    pub fn for_wns(prior: &WnsPrior) -> Result<Self> {
        Self::build(prior.chart_layout(), prior, None)
    }

    pub fn for_brl(prior: &WnsBrlPrior) -> Result<Self> {
        Self::build(prior.chart_layout()?, &prior.base, Some(prior))
    }

    fn build(layout: ChartLayout, base: &WnsPrior, brl: Option<&WnsBrlPrior>) -> Result<Self> {
        let mut segments = Vec::new();
        for span in layout.segments() {
            let term = match span.segment {
                Segment::PLogDiag => Term::BartlettLogDiag { k: base.k_p },
                Segment::POffDiag | Segment::QOffDiag => Term::StdNormal,
                Segment::Ftil => gaussian_term(&base.f)?,
                Segment::S => gaussian_term(&base.s)?,
                Segment::QLogDiag => match &base.q {
                    QDraw::Wishart { k, .. } => Term::BartlettLogDiag { k: *k },
                    _ => unreachable!("layout follows the Q variant"),
                },
                Segment::LogAlpha => match &base.q {
                    QDraw::AlphaP { k, theta } => Term::LogGamma { shape: *k, scale: *theta },
                    _ => unreachable!("layout follows the Q variant"),
                },
                Segment::LogitSigma | Segment::LogitRho => Term::Logistic,
                Segment::C | Segment::CayleyU | Segment::CayleyV | Segment::LogGamma => {
                    let b = brl.expect("BRL segments only appear in BRL layouts");
                    let GainSampler::ZBall { u: OrthSampler::Cayley { skew: su, .. }, v: OrthSampler::Cayley { skew: sv, .. } } = &b.gain else {
                        unreachable!("chart_layout admits only Cayley spectral-ball priors")
                    };
                    match span.segment {
                        Segment::C => gaussian_term(&b.c)?,
                        Segment::CayleyU => gaussian_term(su)?,
                        Segment::CayleyV => gaussian_term(sv)?,
                        _ => scalar_term(&b.gamma),
                    }
                }
            };
            segments.push((span, term));
        }
        Ok(Self { layout, segments })
    }

    pub fn dim(&self) -> usize {
        self.segments.iter().map(|(s, _)| s.len).sum()
    }

    /// Log-density; `−∞` outside the domain (non-finite coordinates).
    pub fn log_prior(&self, coords: &[f64]) -> f64 {
        self.eval(coords, None)
    }

    /// Log-density and its gradient.
    pub fn log_prior_grad(&self, coords: &[f64]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; coords.len()];
        let lp = self.eval(coords, Some(&mut g));
        (lp, g)
    }

    fn eval(&self, coords: &[f64], mut grad: Option<&mut Vec<f64>>) -> f64 {
        if coords.len() != self.dim() || coords.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let mut total = 0.0;
        for (span, term) in &self.segments {
            let z = &coords[span.range()];
            let mut gs = vec![0.0; z.len()];
            match term {
                Term::BartlettLogDiag { k } => {
                    for (i, &zi) in z.iter().enumerate() {
                        let nu = k - i as f64;
                        let e2 = (2.0 * zi).exp();
                        total += nu * zi - 0.5 * e2 - (0.5 * nu - 1.0) * std::f64::consts::LN_2 - ln_gamma(0.5 * nu);
                        gs[i] = nu - e2;
                    }
                }
                Term::StdNormal => {
                    for (i, &zi) in z.iter().enumerate() {
                        total += -0.5 * zi * zi - 0.5 * LN_2PI;
                        gs[i] = -zi;
                    }
                }
                Term::Gaussian(g) => {
                    let r = DVector::from_column_slice(z) - &g.mean;
                    let w = g.chol.solve_lower_triangular(&r).expect("positive-definite factor");
                    let ln_det: f64 = g.chol.diagonal().iter().map(|d| d.ln()).sum();
                    total += -0.5 * w.norm_squared() - ln_det - 0.5 * z.len() as f64 * LN_2PI;
                    let gv = g.chol.transpose().solve_upper_triangular(&w).expect("positive-definite factor");
                    for i in 0..z.len() {
                        gs[i] = -gv[i];
                    }
                }
                Term::LogGamma { shape, scale } => {
                    for (i, &zi) in z.iter().enumerate() {
                        let e = zi.exp();
                        total += shape * zi - e / scale - ln_gamma(*shape) - shape * scale.ln();
                        gs[i] = shape - e / scale;
                    }
                }
                Term::Logistic => {
                    for (i, &zi) in z.iter().enumerate() {
                        total += -softplus(-zi) - softplus(zi);
                        gs[i] = 1.0 - 2.0 * sigmoid(zi);
                    }
                }
            }
            if let Some(g) = grad.as_deref_mut() {
                g[span.range()].copy_from_slice(&gs);
            }
        }
        if total.is_finite() {
            total
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Exact draw of the coordinates (sign matrices fixed to the identity).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dim());
        for (span, term) in &self.segments {
            match term {
                Term::BartlettLogDiag { k } => {
                    for i in 0..span.len {
                        let chi = ChiSquared::new(k - i as f64).map_err(|e| Error::DomainError(e.to_string()))?;
                        out.push(0.5 * chi.sample(rng).ln());
                    }
                }
                Term::StdNormal => out.extend((0..span.len).map(|_| rng.sample::<f64, _>(StandardNormal))),
                Term::Gaussian(g) => out.extend(crate::priors::wns::sample_gaussian(g, rng).iter()),
                Term::LogGamma { shape, scale } => {
                    for _ in 0..span.len {
                        out.push(sample_gamma(*shape, *scale, rng)?.ln());
                    }
                }
                Term::Logistic => {
                    for _ in 0..span.len {
                        let u: f64 = rng.random::<f64>();
                        out.push(logit(u.max(f64::MIN_POSITIVE)));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Prior mean of every coordinate.
    pub fn coordinate_means(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for (span, term) in &self.segments {
            match term {
                Term::BartlettLogDiag { k } => {
                    out.extend((0..span.len).map(|i| 0.5 * (digamma(0.5 * (k - i as f64)) + std::f64::consts::LN_2)))
                }
                Term::Gaussian(g) => out.extend(g.mean.iter()),
                Term::LogGamma { shape, scale } => out.extend((0..span.len).map(|_| digamma(*shape) + scale.ln())),
                Term::StdNormal | Term::Logistic => out.extend((0..span.len).map(|_| 0.0)),
            }
        }
        out
    }
}

/// Log prior density of unconstrained coordinates under a WNS-BRL prior.
pub fn log_prior(v: &UnconstrainedVector, prior: &WnsBrlPrior) -> Result<f64> {
    let cp = ChartPrior::for_brl(prior)?;
    if v.layout != cp.layout.segments() {
        return Err(Error::DimensionMismatch("coordinate layout does not match the prior".into()));
    }
    Ok(cp.log_prior(&v.coords))
}
