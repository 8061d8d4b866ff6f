use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infer::kernels::{run_kernel, Chain, KernelConfig};
use crate::infer::likelihood::MomentLikelihood;
use crate::infer::target::LogDensity;
use crate::param::chart::{logit, sigmoid, ScalarChart};
use crate::param::{Dims, Ssm};
use crate::priors::density::softplus;
use crate::priors::{RngStream, ScalarPrior};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn unit() -> f64 {
    1.0
}

/// I.i.d. zero-mean Gaussian priors on the raw entries of each matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub n: usize,
    pub l: usize,
    pub q: usize,
    #[serde(default = "unit")]
    pub std_a: f64,
    #[serde(default = "unit")]
    pub std_b: f64,
    #[serde(default = "unit")]
    pub std_c: f64,
    #[serde(default = "unit")]
    pub std_d: f64,
    #[serde(default = "unit")]
    pub std_f: f64,
    #[serde(default = "unit")]
    pub std_g: f64,
    pub rho: ScalarPrior,
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.l == 0 || self.q == 0 {
            return Err(Error::InvalidConfig("baseline dimensions must be positive".into()));
        }
        for s in self.stds() {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig(format!("baseline entry std {s} must be positive")));
            }
        }
        match self.rho {
            ScalarPrior::Fixed { value } if value.abs() <= 1.0 => Ok(()),
            ScalarPrior::Uniform { lo, hi } if -1.0 <= lo && lo < hi && hi <= 1.0 => Ok(()),
            _ => Err(Error::InvalidConfig(format!("rho prior {:?} must live in [-1, 1]", self.rho))),
        }
    }

    fn stds(&self) -> [f64; 6] {
        [self.std_a, self.std_b, self.std_c, self.std_d, self.std_f, self.std_g]
    }

    /// `(rows, cols)` of `A, B, C, D, F, G`.
    fn shapes(&self) -> [(usize, usize); 6] {
        let (n, l, q) = (self.n, self.l, self.q);
        [(n, n), (n, l), (q, n), (q, l), (n, n), (n, l)]
    }

    fn rho_chart(&self) -> ScalarChart {
        match self.rho {
            ScalarPrior::Uniform { lo, hi } => ScalarChart::Interval { lo, hi },
            ScalarPrior::Fixed { value } => ScalarChart::Fixed(value),
            ScalarPrior::Gamma { .. } => unreachable!("rejected by validate"),
        }
    }

    fn entries(&self) -> usize {
        self.shapes().iter().map(|(r, c)| r * c).sum()
    }
}

/// Posterior over raw matrix entries, with forced rejection of diverging models.
#[derive(Debug, Clone)]
pub struct BaselineModel {
    pub config: BaselineConfig,
    pub likelihood: Option<MomentLikelihood>,
}

impl BaselineModel {
    pub fn new(config: BaselineConfig, likelihood: Option<MomentLikelihood>) -> Result<Self> {
        config.validate()?;
        if let Some(lik) = &likelihood {
            let d = lik.dims();
            if d != (Dims { n: config.n, l: config.l, q: config.q }) {
                return Err(Error::DimensionMismatch("baseline and data dimensions differ".into()));
            }
        }
        Ok(Self { config, likelihood })
    }

    fn has_rho(&self) -> bool {
        matches!(self.config.rho, ScalarPrior::Uniform { .. })
    }

    /// Coordinates: `vec A, vec B, vec C, vec D, vec F, vec G` (column-major), then logit ρ.
    pub fn realize(&self, x: &[f64]) -> Result<Ssm> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("{} coordinates, baseline needs {}", x.len(), self.dim())));
        }
        let mut k = 0;
        let mut mats = self.config.shapes().map(|(r, c)| {
            let m = DMatrix::from_column_slice(r, c, &x[k..k + r * c]);
            k += r * c;
            m
        });
        let rho = self.config.rho_chart().forward(x.get(k).copied().unwrap_or(0.0));
        let take = |m: &mut DMatrix<f64>| std::mem::replace(m, DMatrix::zeros(0, 0));
        let [a, b, c, d, f, g] = &mut mats;
        Ssm::new(take(a), take(b), take(c), take(d), take(f), take(g), rho)
    }

    /// Coordinates of a model.
    pub fn coords_of(&self, s: &Ssm) -> Result<Vec<f64>> {
        if s.dims() != (Dims { n: self.config.n, l: self.config.l, q: self.config.q }) {
            return Err(Error::DimensionMismatch("model does not match the baseline dimensions".into()));
        }
        let mut x: Vec<f64> = [&s.a, &s.b, &s.c, &s.d, &s.f, &s.g].iter().flat_map(|m| m.iter().copied()).collect();
        if self.has_rho() {
            x.push(self.config.rho_chart().inverse(s.rho)?);
        }
        Ok(x)
    }

    pub fn log_prior(&self, x: &[f64]) -> f64 {
        self.prior_terms(x, None)
    }

    fn prior_terms(&self, x: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let mut total = 0.0;
        let mut k = 0;
        for ((r, c), s) in self.config.shapes().into_iter().zip(self.config.stds()) {
            for _ in 0..r * c {
                let z = x[k] / s;
                total -= 0.5 * z * z + s.ln() + LN_SQRT_2PI;
                if let Some(g) = grad.as_deref_mut() {
                    g[k] = -z / s;
                }
                k += 1;
            }
        }
        if self.has_rho() {
            let z = x[k];
            total += -softplus(-z) - softplus(z);
            if let Some(g) = grad.as_deref_mut() {
                g[k] = 1.0 - 2.0 * sigmoid(z);
            }
        }
        total
    }

    /// `0` without data; `−∞` (forced rejection) when moments diverge.
    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let Some(lik) = &self.likelihood else { return 0.0 };
        match self.realize(x) {
            Ok(s) => lik.log_likelihood(&s),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    pub fn log_posterior(&self, x: &[f64]) -> f64 {
        let lp = self.log_prior(x);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + self.log_likelihood(x)
    }

    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        for ((r, c), s) in self.config.shapes().into_iter().zip(self.config.stds()) {
            x.extend((0..r * c).map(|_| s * rng.sample::<f64, _>(StandardNormal)));
        }
        if self.has_rho() {
            let u: f64 = rng.random();
            x.push(logit(u.max(f64::MIN_POSITIVE)));
        }
        x
    }
}

impl LogDensity for BaselineModel {
    fn dim(&self) -> usize {
        self.config.entries() + usize::from(self.has_rho())
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.log_posterior(x)
    }

    fn gradient(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let mut g = vec![0.0; x.len()];
        let lp = self.prior_terms(x, Some(&mut g));
        let Some(lik) = &self.likelihood else { return Some((lp, g)) };
        let fail = || Some((f64::NEG_INFINITY, vec![f64::NAN; x.len()]));
        if !lp.is_finite() {
            return fail();
        }
        let Ok(s) = self.realize(x) else { return fail() };
        let Some((ll, gs)) = lik.log_likelihood_grad(&s) else { return fail() };
        let mut k = 0;
        for m in [&gs.a, &gs.b, &gs.c, &gs.d, &gs.f, &gs.g] {
            for v in m.iter() {
                g[k] += v;
                k += 1;
            }
        }
        if let ScalarChart::Interval { lo, hi } = self.config.rho_chart() {
            let sg = sigmoid(x[k]);
            g[k] += gs.rho * (hi - lo) * sg * (1.0 - sg);
        }
        Some((lp + ll, g))
    }

    fn coordinate_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        for (tag, (r, c)) in ["a", "b", "c", "d", "f", "g"].iter().zip(self.config.shapes()) {
            for j in 0..c {
                for i in 0..r {
                    names.push(format!("{tag}[{i},{j}]"));
                }
            }
        }
        if self.has_rho() {
            names.push("logit_rho".into());
        }
        names
    }
}

/// MCMC over raw matrix entries with the configured kernel.
pub fn free_param_baseline(model: &BaselineModel, init: &[f64], n_iters: usize, kernel: &KernelConfig, seed: RngStream) -> Result<Chain> {
    run_kernel(model, init, n_iters, kernel, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::target::{value_and_gradient, GradientMode};
    use crate::sdesim::{make_dataset, InputSignal, TimeGrid};

    fn config() -> BaselineConfig {
        BaselineConfig {
            n: 2,
            l: 1,
            q: 1,
            std_a: 1.0,
            std_b: 1.0,
            std_c: 1.0,
            std_d: 1.0,
            std_f: 0.5,
            std_g: 0.5,
            rho: ScalarPrior::Uniform { lo: -0.95, hi: 0.95 },
        }
    }

    fn truth() -> Ssm {
        let mut s = Ssm::zeros(Dims { n: 2, l: 1, q: 1 });
        s.a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.5, -1.5]);
        s.b = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        s.c = DMatrix::from_row_slice(1, 2, &[1.0, 0.5]);
        s.f = DMatrix::from_element(2, 2, 0.1);
        s.g = DMatrix::from_column_slice(2, 1, &[0.1, 0.1]);
        s.rho = 0.3;
        s
    }

    fn model() -> BaselineModel {
        let grid = TimeGrid::new(0.0, 2.0, 0.01).unwrap();
        let u = InputSignal::Fourier { a: DMatrix::from_element(1, 2, 1.0), b: DMatrix::from_element(1, 2, 0.3), period: 2.0 };
        let idx = grid.measurement_indices(2.0, 20).unwrap();
        let d = make_dataset(&truth(), &[0.0, 0.0], &u, &grid, &idx, 5, 0.1, RngStream::new(8, 0)).unwrap();
        BaselineModel::new(config(), Some(MomentLikelihood::new(&d, None).unwrap())).unwrap()
    }

    #[test]
    fn coordinates_round_trip() {
        let m = model();
        let x = m.coords_of(&truth()).unwrap();
        assert_eq!(x.len(), m.dim());
        assert_eq!(m.coordinate_names().len(), m.dim());
        let back = m.realize(&x).unwrap();
        assert!((back.rho - 0.3).abs() < 1e-12);
        assert_eq!(back.a, truth().a);
    }

    #[test]
    fn prior_gradient_matches_differences() {
        let m = BaselineModel::new(config(), None).unwrap();
        let x = m.sample_prior(&mut RngStream::new(1, 0).rng());
        let (_, g) = value_and_gradient(&m, &x, GradientMode::Supplied).unwrap();
        let (_, gf) = value_and_gradient(&m, &x, GradientMode::default()).unwrap();
        for (a, b) in g.iter().zip(&gf) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn likelihood_gradient_matches_differences() {
        let m = model();
        let mut x = m.coords_of(&truth()).unwrap();
        x[0] += 0.2;
        let (v, g) = value_and_gradient(&m, &x, GradientMode::Supplied).unwrap();
        let (v2, gf) = value_and_gradient(&m, &x, GradientMode::default()).unwrap();
        assert!((v - v2).abs() < 1e-10 * v.abs());
        for (a, b) in g.iter().zip(&gf) {
            assert!((a - b).abs() < 1e-4 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn unstable_init_has_infinite_likelihood() {
        let m = model();
        let mut bad = truth();
        bad.a = DMatrix::from_diagonal_element(2, 2, 15.0);
        let x = m.coords_of(&bad).unwrap();
        assert_eq!(m.log_likelihood(&x), f64::NEG_INFINITY);
        assert!(m.log_prior(&x).is_finite());
        let c = free_param_baseline(&m, &x, 200, &KernelConfig::Rwm { scale: 0.05, warmup: 0, target_accept: 0.234 }, RngStream::new(2, 0)).unwrap();
        assert_eq!(c.log_posts[0], f64::NEG_INFINITY);
        assert!(c.forced_rejections > 0);
    }

    #[test]
    fn tiny_steps_from_truth_never_force_rejections() {
        let m = model();
        let x = m.coords_of(&truth()).unwrap();
        let c = free_param_baseline(&m, &x, 100, &KernelConfig::Rwm { scale: 1e-3, warmup: 0, target_accept: 0.234 }, RngStream::new(3, 0)).unwrap();
        assert_eq!(c.forced_rejections, 0);
        assert!(c.acceptance_rate() > 0.5);
    }
}
