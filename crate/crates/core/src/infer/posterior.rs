use rand::Rng;

use crate::error::{Error, Result};
use crate::infer::likelihood::MomentLikelihood;
use crate::infer::target::LogDensity;
use crate::matfound::SpdMatrix;
use crate::param::chart::{ChartParams, Segment};
use crate::param::{ssm_from_brl_params, BrlParams, Ssm};
use crate::priors::ChartPrior;

/// Log-posterior over the unconstrained coordinates of a parametrized prior.
#[derive(Debug, Clone)]
pub struct PosteriorModel {
    pub prior: ChartPrior,
    pub likelihood: Option<MomentLikelihood>,
}

/// Model realized from a coordinate vector, with its certificate.
#[derive(Debug, Clone)]
pub struct Realized {
    pub params: BrlParams,
    pub ssm: Ssm,
    pub p: SpdMatrix,
}

impl PosteriorModel {
    /// Without a likelihood the target is the prior.
    pub fn new(prior: ChartPrior, likelihood: Option<MomentLikelihood>) -> Result<Self> {
        if let Some(lik) = &likelihood {
            let Some(b) = &prior.layout.brl else {
                return Err(Error::InvalidConfig("a likelihood needs a bounded-real prior".into()));
            };
            let d = lik.dims();
            if (d.n, d.l, d.q) != (prior.layout.n, b.l, b.q) {
                return Err(Error::DimensionMismatch(format!(
                    "data imply (n, l, q) = ({}, {}, {}), prior has ({}, {}, {})",
                    d.n, d.l, d.q, prior.layout.n, b.l, b.q
                )));
            }
        }
        Ok(Self { prior, likelihood })
    }

    pub fn realize(&self, coords: &[f64]) -> Result<Realized> {
        match self.prior.layout.from_unconstrained(coords)? {
            ChartParams::Brl(params) => {
                let (ssm, p) = ssm_from_brl_params(&params)?;
                Ok(Realized { params, ssm, p })
            }
            ChartParams::Stable(_) => Err(Error::UnsupportedFamily("a stable-pair chart has no full model".into())),
        }
    }

    /// `0` without data; `−∞` when the coordinates do not realize a model.
    pub fn log_likelihood(&self, coords: &[f64]) -> f64 {
        let Some(lik) = &self.likelihood else { return 0.0 };
        match self.realize(coords) {
            Ok(r) => lik.log_likelihood(&r.ssm),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    pub fn log_prior(&self, coords: &[f64]) -> f64 {
        self.prior.log_prior(coords)
    }

    pub fn log_posterior(&self, coords: &[f64]) -> f64 {
        let lp = self.log_prior(coords);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + self.log_likelihood(coords)
    }

    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        self.prior.sample(rng)
    }
}

impl LogDensity for PosteriorModel {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.log_posterior(x)
    }

    /// Prior gradient plus the adjoint likelihood gradient, pulled back to the
    /// coordinates through central differences of the parameter map.
    fn gradient(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (lp, mut g) = self.prior.log_prior_grad(x);
        let Some(lik) = &self.likelihood else { return Some((lp, g)) };
        let fail = || Some((f64::NEG_INFINITY, vec![f64::NAN; x.len()]));
        if !lp.is_finite() {
            return fail();
        }
        let Ok(r) = self.realize(x) else { return fail() };
        let Some((ll, gs)) = lik.log_likelihood_grad(&r.ssm) else { return fail() };
        let mut y = x.to_vec();
        for j in 0..x.len() {
            let h = 1e-6 * x[j].abs().max(1.0);
            y[j] = x[j] + h;
            let up = self.realize(&y).ok();
            y[j] = x[j] - h;
            let dn = self.realize(&y).ok();
            y[j] = x[j];
            let dir = match (up, dn) {
                (Some(u), Some(d)) => ssm_difference(&u.ssm, &d.ssm, 2.0 * h),
                (Some(u), None) => ssm_difference(&u.ssm, &r.ssm, h),
                (None, Some(d)) => ssm_difference(&r.ssm, &d.ssm, h),
                (None, None) => return fail(),
            };
            g[j] += gs.contract(&dir);
        }
        Some((lp + ll, g))
    }

    fn coordinate_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        for span in self.prior.layout.segments() {
            let tag = segment_name(span.segment);
            names.extend((0..span.len).map(|i| format!("{tag}[{i}]")));
        }
        names
    }
}

fn segment_name(s: Segment) -> &'static str {
    match s {
        Segment::PLogDiag => "p_log_diag",
        Segment::POffDiag => "p_off_diag",
        Segment::Ftil => "f_tilde",
        Segment::S => "s",
        Segment::QLogDiag => "q_log_diag",
        Segment::QOffDiag => "q_off_diag",
        Segment::LogAlpha => "log_alpha",
        Segment::C => "c",
        Segment::CayleyU => "cayley_u",
        Segment::CayleyV => "cayley_v",
        Segment::LogitSigma => "logit_sigma",
        Segment::LogitRho => "logit_rho",
        Segment::LogGamma => "log_gamma",
    }
}

/// `(a − b) / span`, entrywise.
pub(crate) fn ssm_difference(a: &Ssm, b: &Ssm, span: f64) -> Ssm {
    Ssm {
        a: (&a.a - &b.a) / span,
        b: (&a.b - &b.b) / span,
        c: (&a.c - &b.c) / span,
        d: (&a.d - &b.d) / span,
        f: (&a.f - &b.f) / span,
        g: (&a.g - &b.g) / span,
        rho: (a.rho - b.rho) / span,
    }
}

/// The best of `k` candidates by target density.
pub fn best_of<T: LogDensity + ?Sized>(target: &T, candidates: Vec<Vec<f64>>) -> Result<Vec<f64>> {
    candidates
        .into_iter()
        .map(|c| (target.log_density(&c), c))
        .filter(|(lp, _)| lp.is_finite())
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c)
        .ok_or_else(|| Error::NumericalFailure("no candidate has a finite density".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matfound::max_eig_sym;
    use crate::param::assemble_brl_matrix;
    use crate::priors::brl::tests::{cayley, paper_like};
    use crate::priors::{RngStream, WnsBrlPrior};

    pub(crate) fn prior() -> WnsBrlPrior {
        WnsBrlPrior::from_config(&paper_like(cayley())).unwrap()
    }

    #[test]
    fn prior_only_posterior_equals_prior() {
        let model = PosteriorModel::new(ChartPrior::for_brl(&prior()).unwrap(), None).unwrap();
        let mut rng = RngStream::new(3, 0).rng();
        for _ in 0..20 {
            let x = model.sample_prior(&mut rng).unwrap();
            assert_eq!(model.log_posterior(&x), model.log_prior(&x));
            let r = model.realize(&x).unwrap();
            assert!(max_eig_sym(&assemble_brl_matrix(&r.ssm, &r.p, r.params.gamma)).unwrap() < 0.0);
        }
        assert_eq!(model.coordinate_names().len(), model.dim());
        assert!(model.gradient(&model.sample_prior(&mut rng).unwrap()).is_some());
    }

    #[test]
    fn supplied_gradient_matches_finite_differences() {
        use crate::infer::target::{value_and_gradient, GradientMode};
        use crate::sdesim::{make_dataset, InputSignal, TimeGrid};
        let mut cfg = paper_like(cayley());
        cfg.base.n = 2;
        cfg.l = 1;
        cfg.gamma = crate::priors::ScalarPrior::Gamma { shape: 1.0, scale: 1.0 };
        cfg.rho = crate::priors::ScalarPrior::Uniform { lo: -0.95, hi: 0.95 };
        let prior = WnsBrlPrior::from_config(&cfg).unwrap();
        let cp = ChartPrior::for_brl(&prior).unwrap();
        let mut rng = RngStream::new(5, 0).rng();
        let truth = PosteriorModel::new(cp.clone(), None).unwrap();
        let x = truth.sample_prior(&mut rng).unwrap();
        let s = truth.realize(&x).unwrap().ssm;
        let grid = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        let u = InputSignal::Fourier { a: nalgebra::DMatrix::from_element(1, 2, 1.0), b: nalgebra::DMatrix::from_element(1, 2, 0.5), period: 1.0 };
        let idx = grid.measurement_indices(1.0, 10).unwrap();
        let d = make_dataset(&s, &[0.0, 0.0], &u, &grid, &idx, 3, 0.2, RngStream::new(6, 0)).unwrap();
        let model = PosteriorModel::new(cp, Some(MomentLikelihood::new(&d, Some(0.05)).unwrap())).unwrap();
        let y = model.sample_prior(&mut rng).unwrap();
        let (v, g) = value_and_gradient(&model, &y, GradientMode::Supplied).unwrap();
        let (v2, g2) = value_and_gradient(&model, &y, GradientMode::FiniteDiff { h: 1e-5 }).unwrap();
        assert!((v - v2).abs() < 1e-10 * v.abs());
        for (a, b) in g.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-4 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn best_of_picks_highest() {
        let t = crate::infer::target::tests::std_normal(1);
        assert_eq!(best_of(&t, vec![vec![2.0], vec![0.1], vec![-1.0]]).unwrap(), vec![0.1]);
        assert!(best_of(&t, vec![vec![f64::NAN]]).is_err());
    }
}
